"""The k-dimensional proximal subproblem of the fixed-point system.

For one pool sample the minimizer of

    (1/k) 1' rho(u)
    + (r1 nu1 / 2k) || Pperp (u + sigma1 eta) ||^2
    + (r2 nu2 / 2k) || Pbar (u - gamma ybar 1 - alpha kstar z1 1
                              + sigma1 eta + sigma2 z2 1) ||^2

over u in R^k, where rho(x) = log(1 + e^x), Pbar averages the k coordinates
and Pperp = I - Pbar.  rho'' > 0 makes the objective strictly convex, so
Newton with an Armijo backstop converges; the Hessian is diagonal plus
rank-one and is inverted in O(k) per sample.
"""

from __future__ import annotations

import numpy as np

from ..logit import log1pexp, sigmoid
from .state import EqsState, MCPool

GRAD_TOL = 1e-10
MAX_NEWTON = 100


class ProxDiagnostics:
    """Stall accounting for a batched solve."""

    def __init__(self):
        self.newton_iters = 0
        self.stalled = 0


def prox_batch(state: EqsState, pool: MCPool, kappa_star: float,
               ybar: np.ndarray, u0: np.ndarray | None = None,
               diag: ProxDiagnostics | None = None) -> np.ndarray:
    """Minimizers for every pool sample, shape (N, k)."""
    k = pool.k
    a = state.r1 * state.nu1
    b = state.r2 * state.nu2
    gamma = state.gamma
    # Targets: Pperp term pulls u toward -sigma1 eta; Pbar term toward c2.
    shift = gamma * ybar + state.alpha * kappa_star * pool.z1
    c2 = shift[:, None] - state.sigma1 * pool.eta - state.sigma2 * pool.z2[:, None]
    t1 = -state.sigma1 * pool.eta

    if u0 is None:
        # Quadratic-only minimizer: mean part from the Pbar target, deviation
        # part from the Pperp target.
        u = np.broadcast_to(c2.mean(axis=1, keepdims=True), c2.shape).copy()
        u += t1 - t1.mean(axis=1, keepdims=True)
    else:
        u = u0.copy()

    def grad_rows(uu, t1r, c2r):
        perp = (uu - t1r) - (uu - t1r).mean(axis=1, keepdims=True)
        bar = (uu - c2r).mean(axis=1, keepdims=True)
        return (sigmoid(uu) + a * perp + b * np.broadcast_to(bar, uu.shape)) / k

    idx = np.arange(u.shape[0])
    g = grad_rows(u, t1, c2)
    live = np.linalg.norm(g, axis=1) > GRAD_TOL
    idx, ua, ga = idx[live], u[live], g[live]
    t1a, c2a = t1[live], c2[live]
    cc = (b - a) / k
    it = 0
    while idx.size and it < MAX_NEWTON:
        it += 1
        w = sigmoid(ua)
        rhs = -k * ga
        if k == 1:
            step = rhs / (w * (1.0 - w) + a + cc)
        else:
            # Diagonal-plus-rank-one inverse; the floor on d keeps the
            # cancellation bounded where the logistic curvature underflows
            # (the line search below absorbs the resulting inexactness).
            d = np.maximum(w * (1.0 - w) + a, 1e-12)
            x = rhs / d
            denom = 1.0 + cc * (1.0 / d).sum(axis=1)
            safe = np.abs(denom) > 1e-12
            corr = cc * (x.sum(axis=1) / np.where(safe, denom, 1.0))
            step = x - corr[:, None] / d
            if not safe.all():
                for i in np.flatnonzero(~safe):
                    h = np.diag(d[i]) + cc * np.ones((k, k))
                    step[i] = np.linalg.solve(h, rhs[i])
        # Armijo with a float-resolution allowance, so steps at the bottom of
        # the quadratic basin are not rejected for failing to decrease an
        # objective that can no longer change.
        f0 = _objective_rows(ua, t1a, c2a, a, b, k)
        slope = (ga * step).sum(axis=1)
        t = np.ones(step.shape[0])
        allow = 32.0 * np.finfo(float).eps * (1.0 + np.abs(f0))
        for _ in range(40):
            cand = ua + t[:, None] * step
            fc = _objective_rows(cand, t1a, c2a, a, b, k)
            ok = fc <= f0 + 1e-4 * t * slope + allow
            if ok.all():
                break
            t[~ok] *= 0.5
        ua = ua + t[:, None] * step
        u[idx] = ua
        ga = grad_rows(ua, t1a, c2a)
        still = np.linalg.norm(ga, axis=1) > GRAD_TOL
        # Rows whose step has collapsed to float resolution cannot improve.
        still &= np.linalg.norm(t[:, None] * step, axis=1) \
            > 1e-15 * (1.0 + np.linalg.norm(ua, axis=1))
        idx, ua, ga = idx[still], ua[still], ga[still]
        t1a, c2a = t1a[still], c2a[still]
    if diag is not None:
        diag.newton_iters += it
        diag.stalled += int(idx.size)
    return u


def _objective_rows(uu, t1, c2, a, b, k):
    perp = (uu - t1) - (uu - t1).mean(axis=1, keepdims=True)
    bar = (uu - c2).mean(axis=1)
    return (log1pexp(uu).sum(axis=1) + 0.5 * a * (perp**2).sum(axis=1)
            + 0.5 * b * k * bar**2) / k


def prox_gradient(state: EqsState, pool: MCPool, kappa_star: float,
                  ybar: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Analytic gradient of the subproblem objective at u, per sample."""
    k = pool.k
    a = state.r1 * state.nu1
    b = state.r2 * state.nu2
    shift = state.gamma * ybar + state.alpha * kappa_star * pool.z1
    c2 = shift[:, None] - state.sigma1 * pool.eta - state.sigma2 * pool.z2[:, None]
    t1 = -state.sigma1 * pool.eta
    perp = (u - t1) - (u - t1).mean(axis=1, keepdims=True)
    bar = (u - c2).mean(axis=1, keepdims=True)
    return (sigmoid(u) + a * perp + b * np.broadcast_to(bar, u.shape)) / k


def inner_prox(state: EqsState, sample: tuple, k: int,
               kappa_star: float, kappa_o: float) -> np.ndarray:
    """Single-sample front end: sample = (z0, z1, z2, eps, eta)."""
    z0, z1, z2, eps, eta = sample
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.shape != (k,):
        raise ValueError("eta must have length k")
    pool = MCPool(z0=np.array([z0], dtype=float), z1=np.array([z1], dtype=float),
                  z2=np.array([z2], dtype=float), eta=eta[None, :],
                  base_weight=np.ones(1), eps=np.array([eps], dtype=float))
    ybar, _ = pool.labels_and_weights(kappa_o, kappa_star)
    return prox_batch(state, pool, kappa_star, ybar)[0]


def prox_logistic_scalar(v: np.ndarray, t: float) -> np.ndarray:
    """argmin_x rho(x) + (x - v)^2 / (2 t), elementwise.

    Newton on the strictly increasing first-order condition, safeguarded by
    the bracket [v - t, v] on which it changes sign.
    """
    v = np.asarray(v, dtype=float)
    lo, hi = v - t, v.copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f = mid - v + t * sigmoid(mid)
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f <= 0, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(3):
        sig = sigmoid(x)
        x = x - (x - v + t * sig) / (1.0 + t * sig * (1.0 - sig))
    return x
