"""Empirical comparison of the bilinear Gaussian min-max problem with its
vector-Gaussian counterpart under low-rank-factored dependence.

The matrix problem draws H with Cov[H_ji, H_j'i'] = sum_l S_l[j,j'] *
T_l[i,i'] and solves

    Psi = min_{|w| <= R_w} max_{|u| <= R_u}  w' H u + f(w, u),

f(w, u) = a'w + b'u + (mu_w/2)|w|^2 - (mu_u/2)|u|^2.  The comparison problem
replaces the matrix by 2M Gaussian vectors:

    psi = min max  sum_l ( |w|_{S_l} h_l' T_l^{1/2} u
                           + w' S_l^{1/2} g_l |u|_{T_l} ) + f(w, u).

The tail bounds under test state that P(Psi <= c) and P(Psi >= c) are each
at most 2^M times the corresponding probability for psi, at every c.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covmodel import CovarianceModel, ExperimentDims
from .linalg import min_eigenvalue, psd_sqrt

PSD_TOL = 1e-10


class PsdViolationError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LowRankCovariance:
    """Factor pairs (S_l, T_l) of the matrix covariance, with cached roots."""

    sigma_l: tuple[np.ndarray, ...]
    sigma_tilde_l: tuple[np.ndarray, ...]
    roots_l: tuple[np.ndarray, ...] = field(default=None)
    roots_tilde_l: tuple[np.ndarray, ...] = field(default=None)

    @staticmethod
    def create(sigma_l, sigma_tilde_l) -> "LowRankCovariance":
        sigma_l = tuple(np.asarray(s, dtype=float) for s in sigma_l)
        sigma_tilde_l = tuple(np.asarray(s, dtype=float) for s in sigma_tilde_l)
        if len(sigma_l) != len(sigma_tilde_l) or not sigma_l:
            raise ValueError("need one (S_l, T_l) pair per factor")
        for s in (*sigma_l, *sigma_tilde_l):
            if min_eigenvalue(s) < -PSD_TOL:
                raise PsdViolationError("covariance factor is not PSD")
        return LowRankCovariance(
            sigma_l=sigma_l, sigma_tilde_l=sigma_tilde_l,
            roots_l=tuple(psd_sqrt(s) for s in sigma_l),
            roots_tilde_l=tuple(psd_sqrt(s) for s in sigma_tilde_l))

    @property
    def m_rank(self) -> int:
        return len(self.sigma_l)

    @property
    def p(self) -> int:
        return self.sigma_l[0].shape[0]

    @property
    def n(self) -> int:
        return self.sigma_tilde_l[0].shape[0]


def sample_h(cov: LowRankCovariance, rng: np.random.Generator) -> np.ndarray:
    """H = sum_l S_l^{1/2} E_l T_l^{1/2}, an exact draw from the covariance."""
    h = np.zeros((cov.p, cov.n))
    for rl, rt in zip(cov.roots_l, cov.roots_tilde_l):
        h += rl @ rng.standard_normal((cov.p, cov.n)) @ rt
    return h


@dataclass(frozen=True)
class SaddleProblem:
    """Bilinear term plus a linear-quadratic convex-concave coupling."""

    a: np.ndarray
    b: np.ndarray
    mu_w: float
    mu_u: float
    r_w: float
    r_u: float

    def __post_init__(self):
        if self.mu_w < 0 or self.mu_u < 0:
            raise ValueError("mu_w and mu_u must be nonnegative")
        if self.r_w <= 0 or self.r_u <= 0:
            raise ValueError("ball radii must be positive")


@dataclass(frozen=True)
class SaddleValue:
    value: float
    w_opt: np.ndarray
    duality_gap: float
    iters: int


def _project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(nrm, 1e-300))
    return x * scale


def _max_u_quadratic(c: np.ndarray, mu_u: float, r_u: float):
    """argmax over the ball of c'u - (mu_u/2)|u|^2, batched on axis 0."""
    if mu_u > 0:
        u = _project_ball(c / mu_u, r_u)
    else:
        nrm = np.linalg.norm(c, axis=-1, keepdims=True)
        u = r_u * c / np.maximum(nrm, 1e-300)
    val = np.sum(c * u, axis=-1) - 0.5 * mu_u * np.sum(u * u, axis=-1)
    return u, val


def _primary_phi(w, h, prob):
    """max_u L(w, u) and its maximizer; w batched on axis 0."""
    c = w @ h + prob.b
    u, inner = _max_u_quadratic(c, prob.mu_u, prob.r_u)
    val = inner + w @ prob.a + 0.5 * prob.mu_w * np.sum(w * w, axis=-1)
    return u, val


def _primary_dual(u, h, prob):
    """min_w L(w, u): the matching lower bound on the saddle value."""
    c = u @ h.T + prob.a
    if prob.mu_w > 0:
        w = _project_ball(-c / prob.mu_w, prob.r_w)
    else:
        nrm = np.linalg.norm(c, axis=-1, keepdims=True)
        w = -prob.r_w * c / np.maximum(nrm, 1e-300)
    val = (np.sum(c * w, axis=-1) + 0.5 * prob.mu_w * np.sum(w * w, axis=-1)
           + u @ prob.b - 0.5 * prob.mu_u * np.sum(u * u, axis=-1))
    return val


def solve_primary(h: np.ndarray, prob: SaddleProblem, gap_tol: float = 1e-6,
                  max_iters: int = 100_000) -> SaddleValue:
    """Projected extragradient on (w, u) with step 1/(|H| + mu_w + mu_u).

    The reported value is the exact inner maximum at the final w; the duality
    gap certificate is that value minus the ball-constrained minimum at the
    matching u.  Raises NoConvergenceError with the best iterate attached if
    the gap tolerance is not reached.
    """
    vals = solve_primary_batch(h[None], prob, gap_tol=gap_tol, max_iters=max_iters)
    return vals[0]


def solve_primary_batch(hs: np.ndarray, prob: SaddleProblem,
                        gap_tol: float = 1e-6,
                        max_iters: int = 100_000) -> list[SaddleValue]:
    """Batched extragradient across the leading axis of hs."""
    hs = np.asarray(hs, dtype=float)
    T, p, n = hs.shape
    step = 1.0 / (np.linalg.norm(hs, ord=2, axis=(1, 2)) + prob.mu_w + prob.mu_u)
    w = np.zeros((T, p))
    u = np.zeros((T, n))

    def grads(wv, uv):
        gw = np.einsum("tpn,tn->tp", hs, uv) + prob.a + prob.mu_w * wv
        gu = np.einsum("tpn,tp->tn", hs, wv) + prob.b - prob.mu_u * uv
        return gw, gu

    gap = np.full(T, np.inf)
    iters = np.zeros(T, dtype=int)
    active = np.ones(T, dtype=bool)
    it = 0
    check_every = 25
    while it < max_iters and active.any():
        it += 1
        gw, gu = grads(w, u)
        wm = _project_ball(w - step[:, None] * gw, prob.r_w)
        um = _project_ball(u + step[:, None] * gu, prob.r_u)
        gw2, gu2 = grads(wm, um)
        w_new = _project_ball(w - step[:, None] * gw2, prob.r_w)
        u_new = _project_ball(u + step[:, None] * gu2, prob.r_u)
        w[active], u[active] = w_new[active], u_new[active]
        iters[active] = it
        if it % check_every == 0 or it == max_iters:
            u_best, phi = _phi_batch(w, hs, prob)
            dual = _dual_batch(u_best, hs, prob)
            gap = np.where(active, phi - dual, gap)
            active &= gap > gap_tol * (1.0 + np.abs(phi))
    u_best, phi = _phi_batch(w, hs, prob)
    dual = _dual_batch(u_best, hs, prob)
    return [SaddleValue(value=float(phi[t]), w_opt=w[t].copy(),
                        duality_gap=float(phi[t] - dual[t]), iters=int(iters[t]))
            for t in range(T)]


def _phi_batch(w, hs, prob):
    """Exact inner maximum per trial: w (T, p), hs (T, p, n)."""
    c = np.einsum("tpn,tp->tn", hs, w) + prob.b
    u, inner = _max_u_quadratic(c, prob.mu_u, prob.r_u)
    return u, inner + w @ prob.a + 0.5 * prob.mu_w * np.sum(w * w, axis=-1)


def _dual_batch(u, hs, prob):
    c = np.einsum("tpn,tn->tp", hs, u) + prob.a
    if prob.mu_w > 0:
        w = _project_ball(-c / prob.mu_w, prob.r_w)
    else:
        nrm = np.linalg.norm(c, axis=-1, keepdims=True)
        w = -prob.r_w * c / np.maximum(nrm, 1e-300)
    return (np.sum(c * w, axis=-1) + 0.5 * prob.mu_w * np.sum(w * w, axis=-1)
            + u @ prob.b - 0.5 * prob.mu_u * np.sum(u * u, axis=-1))


# -- the comparison problem ---------------------------------------------


def _block_pattern(cov: LowRankCovariance):
    """Detect the structured row-side family the exact inner oracle covers.

    Returns (kinds, k_block) when every T_l is either a nonnegative multiple
    of the identity or a multiple of the block-ones matrix kron(I_m, 1_{k x k})
    (at most one of each); None otherwise.  kinds[l] is (kind, multiple).
    """
    n = cov.n
    kinds = []
    k_block = None
    for t in cov.sigma_tilde_l:
        d = np.diag(t)
        if not np.allclose(d, d[0], rtol=0, atol=1e-12 * max(1.0, abs(d[0]))):
            return None
        scale = float(d[0])
        off = t - scale * np.eye(n)
        if np.allclose(off, 0.0, atol=1e-12 * max(1.0, scale)):
            kinds.append(("iso", scale))
            continue
        if scale <= 0:
            return None
        mask = np.abs(t - scale) < 1e-12 * max(1.0, scale)
        row_counts = mask.sum(axis=1)
        k = int(row_counts[0])
        if k <= 1 or n % k != 0 or not np.all(row_counts == k):
            return None
        expect = scale * np.kron(np.eye(n // k), np.ones((k, k)))
        if not np.allclose(t, expect, atol=1e-10 * max(1.0, scale)):
            return None
        if k_block is not None and k_block != k:
            return None
        k_block = k
        kinds.append(("block", scale))
    if sum(1 for kk, _ in kinds if kk == "iso") > 1:
        return None
    if sum(1 for kk, _ in kinds if kk == "block") > 1:
        return None
    return kinds, (k_block or 1)


def _block_mean_expand(u: np.ndarray, k: int) -> np.ndarray:
    """Apply the block-average projector along the last axis."""
    shape = u.shape
    ub = u.reshape(*shape[:-1], shape[-1] // k, k)
    return np.broadcast_to(ub.mean(axis=-1, keepdims=True), ub.shape).reshape(shape)


def _aux_inner_exact(v: np.ndarray, c_iso: np.ndarray, c_block: np.ndarray,
                     k: int, mu_u: float, r_u: float):
    """Exact inner maximum for identity/block-ones row factors.

    Maximizes v'u + c_iso |u| + c_block sqrt(k) |P u| - (mu_u/2)|u|^2 over
    the r_u-ball, batched over leading axes, with P the block-average
    projector.  At fixed (|P u|, |Pperp u|) the linear part aligns with the
    corresponding split of v, leaving a planar problem in closed form.
    """
    pv = _block_mean_expand(v, k)
    pv_norm = np.linalg.norm(pv, axis=-1)
    perp = v - pv
    perp_norm = np.linalg.norm(perp, axis=-1)
    a_coef = np.maximum(pv_norm + c_block * math.sqrt(k), 0.0)
    hyp = np.sqrt(a_coef**2 + perp_norm**2)
    h = hyp + c_iso
    if mu_u > 0:
        s = np.clip(h / mu_u, 0.0, r_u)
    else:
        s = np.where(h > 0, r_u, 0.0)
    s = np.where(h > 0, s, 0.0)
    val = s * h - 0.5 * mu_u * s * s
    safe_h = np.maximum(hyp, 1e-300)
    r1 = s * a_coef / safe_h
    r2 = s * perp_norm / safe_h
    dir_p = pv / np.maximum(pv_norm, 1e-300)[..., None]
    none_p = pv_norm <= 1e-300
    if np.any(none_p):
        flat = np.ones(v.shape[-1]) / math.sqrt(v.shape[-1])
        dir_p = np.where(none_p[..., None], flat, dir_p)
    dir_q = perp / np.maximum(perp_norm, 1e-300)[..., None]
    u = r1[..., None] * dir_p + r2[..., None] * dir_q
    return u, val


def solve_auxiliary(cov: LowRankCovariance, prob: SaddleProblem,
                    g_l, h_l, rng: np.random.Generator | None = None,
                    n_w_starts: int = 8, n_outer: int = 400) -> SaddleValue:
    """Nested solve of the comparison problem for one (g, h) draw.

    The outer minimization over w is multistart projected gradient descent on
    the exact inner maximum (closed form for identity/block-ones row factors,
    multistart ascent otherwise).  The duality_gap field reports the outer
    projected-gradient stationarity measure at the returned point, which
    plays the role of the convergence certificate here: the inner problem is
    not concave, so a primal-dual gap is not available.
    """
    g_l = [np.asarray(g, dtype=float) for g in g_l]
    h_l = [np.asarray(h, dtype=float) for h in h_l]
    if len(g_l) != cov.m_rank or len(h_l) != cov.m_rank:
        raise ValueError("need one (g_l, h_l) pair per factor")
    rng = rng or np.random.default_rng(0)
    vals = aux_value_batch(cov, prob, 1, rng, g_all=np.stack(g_l)[None],
                           h_all=np.stack(h_l)[None], n_w_starts=n_w_starts,
                           n_outer=n_outer, return_detail=True)
    return vals[0]


def aux_value_batch(cov: LowRankCovariance, prob: SaddleProblem,
                    n_trials: int, rng: np.random.Generator,
                    g_all: np.ndarray | None = None,
                    h_all: np.ndarray | None = None,
                    n_w_starts: int = 6, n_outer: int = 300,
                    n_u_iters: int = 60, return_detail: bool = False):
    """Comparison-problem values for independent (g, h) draws, batched.

    Tensors carry (trial, start) axes; the inner maximum is the closed form
    when the row factors are identity/block-ones, and multistart projected
    ascent otherwise.
    """
    M, p, n = cov.m_rank, cov.p, cov.n
    if g_all is None:
        g_all = rng.standard_normal((n_trials, M, p))
    if h_all is None:
        h_all = rng.standard_normal((n_trials, M, n))
    pattern = _block_pattern(cov)

    th = np.stack([h_all[:, l, :] @ cov.roots_tilde_l[l].T for l in range(M)],
                  axis=1)
    sg = np.stack([g_all[:, l, :] @ cov.roots_l[l].T for l in range(M)], axis=1)

    def inner_max(v, coefs):
        # v: (T, S, n); coefs: (T, S, M) -> (u, value)
        if pattern is not None:
            kinds, k_blk = pattern
            c_iso = np.zeros(v.shape[:-1])
            c_blk = np.zeros(v.shape[:-1])
            for l, (kind, scale) in enumerate(kinds):
                if kind == "iso":
                    c_iso = c_iso + coefs[..., l] * math.sqrt(scale)
                else:
                    c_blk = c_blk + coefs[..., l] * math.sqrt(scale)
            return _aux_inner_exact(v, c_iso, c_blk, k_blk, prob.mu_u, prob.r_u)
        return _aux_inner_ascent(v, coefs, cov, prob, n_u_iters)

    def phi(w):
        s_w = np.stack([np.sqrt(np.maximum(
            np.einsum("tsp,pq,tsq->ts", w, cov.sigma_l[l], w), 0.0))
            for l in range(M)], axis=-1)
        coefs = np.einsum("tsp,tlp->tsl", w, sg)
        v = prob.b + np.einsum("tsl,tln->tsn", s_w, th)
        u, inner = inner_max(v, coefs)
        f = inner + w @ prob.a + 0.5 * prob.mu_w * np.einsum("tsp,tsp->ts", w, w)
        return u, f, s_w

    def w_grad(w, u, s_w):
        g = prob.a + prob.mu_w * w
        for l in range(M):
            hu = np.einsum("tsn,tn->ts", u @ cov.roots_tilde_l[l].T, h_all[:, l, :])
            sw_safe = np.maximum(s_w[..., l], 1e-12)
            g = g + (hu / sw_safe)[..., None] * (w @ cov.sigma_l[l])
            un = np.sqrt(np.maximum(np.einsum(
                "tsn,nm,tsm->ts", u, cov.sigma_tilde_l[l], u), 0.0))
            g = g + un[..., None] * sg[:, l, :][:, None, :]
        return g

    starts = [np.zeros((n_trials, p)),
              np.broadcast_to(-prob.a / max(np.linalg.norm(prob.a), 1e-12)
                              * prob.r_w, (n_trials, p)).copy()]
    for l in range(M):
        d = sg[:, l, :]
        dn = np.maximum(np.linalg.norm(d, axis=-1, keepdims=True), 1e-12)
        starts.append(-prob.r_w * d / dn)
    while len(starts) < n_w_starts:
        starts.append(_project_ball(rng.standard_normal((n_trials, p)),
                                    prob.r_w))
    w = np.stack(starts, axis=1)

    u, fval, s_w = phi(w)
    w_best, f_best = w.copy(), fval.copy()
    for i in range(n_outer):
        g = w_grad(w, u, s_w)
        step = prob.r_w / (10.0 + np.linalg.norm(g, axis=-1, keepdims=True)) \
            / math.sqrt(1.0 + i / 10.0)
        w = _project_ball(w - step * g, prob.r_w)
        u, fval, s_w = phi(w)
        better = fval < f_best
        w_best[better] = w[better]
        f_best[better] = fval[better]
    # polish: restart the schedule at the incumbents
    w = w_best.copy()
    u, fval, s_w = phi(w)
    for i in range(n_outer // 2):
        g = w_grad(w, u, s_w)
        step = prob.r_w / (40.0 + np.linalg.norm(g, axis=-1, keepdims=True)) \
            / (1.0 + i / 4.0)
        w = _project_ball(w - step * g, prob.r_w)
        u, fval, s_w = phi(w)
        better = fval < f_best
        w_best[better] = w[better]
        f_best[better] = fval[better]
    values = f_best.min(axis=1)
    if not return_detail:
        return values
    out = []
    s_sel = np.argmin(f_best, axis=1)
    w_sel = w_best[np.arange(n_trials), s_sel][:, None, :]
    u_sel, _, sw_sel = phi(w_sel)
    g_sel = w_grad(w_sel, u_sel, sw_sel)
    for t in range(n_trials):
        wt, gt = w_sel[t, 0], g_sel[t, 0]
        eta = prob.r_w / (10.0 + np.linalg.norm(gt))
        stat = float(np.linalg.norm(
            wt - _project_ball(wt - eta * gt, prob.r_w)) / eta)
        out.append(SaddleValue(value=float(values[t]), w_opt=wt.copy(),
                               duality_gap=stat,
                               iters=int(n_outer + n_outer // 2)))
    return out


def _aux_inner_ascent(v, coefs, cov: LowRankCovariance, prob: SaddleProblem,
                      n_iters: int):
    """General-structure inner maximum by multistart projected ascent.

    v: (T, S, n), coefs: (T, S, M).  Start set: the v direction plus both
    signs of each row-factor's top direction.
    """
    starts = [v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-12)
              * prob.r_u]
    for rt in cov.roots_tilde_l:
        d = rt @ np.ones(cov.n)
        d = d / max(np.linalg.norm(d), 1e-12) * prob.r_u
        starts.append(np.broadcast_to(d, v.shape).copy())
        starts.append(np.broadcast_to(-d, v.shape).copy())
    u = np.stack(starts, axis=2)
    vc = v[..., None, :]

    def val(uu):
        out = np.sum(vc * uu, axis=-1) \
            - 0.5 * prob.mu_u * np.sum(uu * uu, axis=-1)
        for l, t_l in enumerate(cov.sigma_tilde_l):
            qn = np.sqrt(np.maximum(
                np.einsum("...n,nm,...m->...", uu, t_l, uu), 0.0))
            out = out + coefs[..., l, None] * qn
        return out

    fb = val(u)
    best = u.copy()
    base = 0.5 * prob.r_u / (1.0 + prob.mu_u * prob.r_u
                             + float(np.abs(v).max()) + 1.0)
    for i in range(n_iters):
        g = np.broadcast_to(vc, u.shape) - prob.mu_u * u
        for l, t_l in enumerate(cov.sigma_tilde_l):
            qn = np.sqrt(np.maximum(
                np.einsum("...n,nm,...m->...", u, t_l, u), 0.0))
            g = g + (coefs[..., l, None] / np.maximum(qn, 1e-12))[..., None] \
                * (u @ t_l)
        u = _project_ball(u + base / math.sqrt(1.0 + i / 8.0) * g, prob.r_u)
        fv = val(u)
        better = fv > fb
        best[better] = u[better]
        fb[better] = fv[better]
    c = np.argmax(fb, axis=-1)
    ti, si = np.meshgrid(np.arange(u.shape[0]), np.arange(u.shape[1]),
                         indexing="ij")
    return best[ti, si, c], fb[ti, si, c]


# -- Monte Carlo tail-inequality check -----------------------------------


@dataclass
class InequalityReport:
    m_rank: int
    n_trials: int
    alpha: float
    c_grid: np.ndarray
    p_psi_le: np.ndarray
    p_psi_ge: np.ndarray
    p_ao_le: np.ndarray
    p_ao_ge: np.ndarray
    flags_le: np.ndarray
    flags_ge: np.ndarray
    ci: dict

    @property
    def n_violations(self) -> int:
        return int(self.flags_le.sum() + self.flags_ge.sum())

    def to_json(self) -> str:
        return json.dumps({
            "m_rank": self.m_rank, "n_trials": self.n_trials, "alpha": self.alpha,
            "c_grid": self.c_grid.tolist(),
            "p_primary_le": self.p_psi_le.tolist(),
            "p_primary_ge": self.p_psi_ge.tolist(),
            "p_aux_le": self.p_ao_le.tolist(),
            "p_aux_ge": self.p_ao_ge.tolist(),
            "flags_le": self.flags_le.astype(int).tolist(),
            "flags_ge": self.flags_ge.astype(int).tolist(),
            "n_violations": self.n_violations,
        })

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c", "p_primary_le", "p_primary_ge", "p_aux_le", "p_aux_ge",
                        "lo_primary_le", "hi_aux_le", "lo_primary_ge", "hi_aux_ge",
                        "flag_le", "flag_ge"])
            for i, c in enumerate(self.c_grid):
                w.writerow([c, self.p_psi_le[i], self.p_psi_ge[i],
                            self.p_ao_le[i], self.p_ao_ge[i],
                            self.ci["lo_primary_le"][i], self.ci["hi_aux_le"][i],
                            self.ci["lo_primary_ge"][i], self.ci["hi_aux_ge"][i],
                            int(self.flags_le[i]), int(self.flags_ge[i])])


def clopper_pearson(k: np.ndarray, n: int, alpha: float):
    k = np.asarray(k)
    lo = np.where(k > 0, stats.beta.ppf(alpha / 2.0, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k), 1.0)
    return lo, hi


def mc_inequality_check(cov: LowRankCovariance, prob: SaddleProblem,
                        n_trials: int, rng: np.random.Generator,
                        c_grid: np.ndarray | None = None,
                        alpha: float = 0.01,
                        gap_tol: float = 1e-6) -> InequalityReport:
    """Tabulate both tail inequalities over a grid of thresholds.

    A threshold is flagged only when the lower (1-alpha) confidence bound of
    the matrix-problem probability exceeds 2^M times the upper confidence
    bound of the vector-problem probability, so flags survive joint Monte
    Carlo uncertainty.
    """
    if n_trials < 500:
        raise ValueError("n_trials must be >= 500")
    hs = np.stack([sample_h(cov, rng) for _ in range(n_trials)])
    psi_vals = np.array([sv.value for sv in
                         solve_primary_batch(hs, prob, gap_tol=gap_tol)])
    ao_vals = aux_value_batch(cov, prob, n_trials, rng)

    if c_grid is None:
        pooled = np.concatenate([psi_vals, ao_vals])
        c_grid = np.linspace(np.quantile(pooled, 0.01),
                             np.quantile(pooled, 0.99), 20)
    c_grid = np.asarray(c_grid, dtype=float)

    k_psi_le = np.array([(psi_vals <= c).sum() for c in c_grid])
    k_psi_ge = np.array([(psi_vals >= c).sum() for c in c_grid])
    k_ao_le = np.array([(ao_vals <= c).sum() for c in c_grid])
    k_ao_ge = np.array([(ao_vals >= c).sum() for c in c_grid])

    factor = 2.0 ** cov.m_rank
    lo_psi_le, _ = clopper_pearson(k_psi_le, n_trials, alpha)
    lo_psi_ge, _ = clopper_pearson(k_psi_ge, n_trials, alpha)
    _, hi_ao_le = clopper_pearson(k_ao_le, n_trials, alpha)
    _, hi_ao_ge = clopper_pearson(k_ao_ge, n_trials, alpha)

    flags_le = lo_psi_le > factor * hi_ao_le
    flags_ge = lo_psi_ge > factor * hi_ao_ge
    return InequalityReport(
        m_rank=cov.m_rank, n_trials=n_trials, alpha=alpha, c_grid=c_grid,
        p_psi_le=k_psi_le / n_trials, p_psi_ge=k_psi_ge / n_trials,
        p_ao_le=k_ao_le / n_trials, p_ao_ge=k_ao_ge / n_trials,
        flags_le=flags_le, flags_ge=flags_ge,
        ci={"lo_primary_le": lo_psi_le, "lo_primary_ge": lo_psi_ge,
            "hi_aux_le": hi_ao_le, "hi_aux_ge": hi_ao_ge})


def build_da_lowrank(model: CovarianceModel, dims: ExperimentDims) -> LowRankCovariance:
    """Rank-two structure of the projected augmented surrogate.

    Row side: identity for the per-row part and the block all-ones matrix for
    the shared part; column side: the split covariances of the model.
    """
    if min_eigenvalue(model.sigma1) < -PSD_TOL or min_eigenvalue(model.sigma2) < -PSD_TOL:
        raise PsdViolationError("split covariances failed the PSD check")
    n, k = dims.n, dims.k
    j_blocks = np.kron(np.eye(dims.m), np.ones((k, k)))
    return LowRankCovariance.create(
        sigma_l=(model.sigma1, model.sigma2),
        sigma_tilde_l=(np.eye(n), j_blocks))
