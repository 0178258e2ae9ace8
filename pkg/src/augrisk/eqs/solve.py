"""Levenberg-Marquardt solver for the ten-equation system.

Strictly positive variables are solved in log space, which keeps steps
multiplicative and the Jacobian well scaled across the orders of magnitude
the variables span.  The unaugmented boundary (sigma1 = r1 = 0 with tau1 and
nu1 parked at a large cap) is handled by freezing those four variables out
of the active set.  The sample pool is held fixed across iterations (common
random numbers), so finite-difference Jacobians are smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chi import ChiTerms
from .residuals import residuals
from .state import LARGE_CAP, NONNEG, VAR_NAMES, EqsState, MCPool
from .testrisk import test_risk_bar

LOG_VARS = frozenset(NONNEG)  # every nonnegative variable is logged when active
LOG_FLOOR = -30.0
LOG_CAP = math.log(LARGE_CAP)


class NoConvergenceError(RuntimeError):
    def __init__(self, best, norm):
        super().__init__(f"no convergence: best residual norm {norm:.3e}")
        self.best = best
        self.norm = norm


@dataclass
class EqsSolution:
    state: EqsState
    residual_norm: float
    residual: np.ndarray
    chi2_bar: float
    test_risk_bar: float
    converged: bool
    boundary_hit: bool
    solver_trace: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "state": {name: getattr(self.state, name) for name in VAR_NAMES},
            "gamma": self.state.gamma,
            "residual_norm": self.residual_norm,
            "residual": self.residual.tolist(),
            "chi2_bar": self.chi2_bar,
            "test_risk_bar": self.test_risk_bar,
            "converged": self.converged,
            "boundary_hit": self.boundary_hit,
            "solver_trace": self.solver_trace,
        }


def isotropic_warm_start(alpha: float, sigma2: float, tau2: float, nu2: float,
                         r2: float, theta: float) -> EqsState:
    """Map an unaugmented six-variable point into the ten-variable space."""
    return EqsState(alpha=alpha, sigma1=0.0, sigma2=sigma2, tau1=LARGE_CAP,
                    tau2=tau2, nu1=LARGE_CAP, nu2=nu2, r1=0.0, r2=r2, theta=theta)


def _encode(x: np.ndarray, active: list[int]) -> np.ndarray:
    out = np.empty(len(active))
    for i, j in enumerate(active):
        if VAR_NAMES[j] in LOG_VARS:
            out[i] = math.log(max(x[j], 1e-300))
        else:
            out[i] = x[j]
    return out


def _decode(xi: np.ndarray, active: list[int], base: np.ndarray) -> np.ndarray:
    x = base.copy()
    for i, j in enumerate(active):
        if VAR_NAMES[j] in LOG_VARS:
            x[j] = math.exp(min(max(xi[i], LOG_FLOOR), LOG_CAP))
        else:
            x[j] = xi[i]
    return x


def solve(init: EqsState, pool: MCPool, limits: ChiTerms, k: int,
          tol: float = 1e-6, max_iters: int = 120,
          pin_boundary: bool | None = None) -> EqsSolution:
    """Levenberg-Marquardt on the residual map in log coordinates.

    `pin_boundary` freezes (sigma1, r1) at 0 and (tau1, nu1) at the cap; by
    default it is inferred from the initial point.  tol = inf returns the
    initial point with its residual.  On failure the best iterate travels
    inside NoConvergenceError.
    """
    if pin_boundary is None:
        pin_boundary = init.sigma1 == 0.0 and init.r1 == 0.0
    pinned: set[int] = set()
    if pin_boundary:
        pinned = {VAR_NAMES.index(n) for n in ("sigma1", "tau1", "nu1", "r1")}
        init = init.replace(sigma1=0.0, r1=0.0, tau1=LARGE_CAP, nu1=LARGE_CAP)
    active = [i for i in range(len(VAR_NAMES)) if i not in pinned]

    base = init.as_array()
    if not pin_boundary:
        # log coordinates need strictly positive starting values
        for j, name in enumerate(VAR_NAMES):
            if name in LOG_VARS and base[j] <= 0:
                base[j] = 1e-3
    xi = _encode(base, active)
    u_warm = [None]

    def eval_res(xi_vec):
        x = _decode(xi_vec, active, base)
        r, u = residuals(EqsState.from_array(x), pool, limits, k,
                         u0=u_warm[0], return_u=True)
        return r, u

    r, u = eval_res(xi)
    u_warm[0] = u
    trace = []
    norm = float(np.linalg.norm(r[active]))
    if not np.isfinite(tol) or norm <= tol:
        state = EqsState.from_array(_decode(xi, active, base))
        return _finish(state, r, norm, limits, pool, True, pin_boundary, trace)

    mu = 1e-4
    best = (xi.copy(), r.copy(), norm)
    stall = 0
    for it in range(max_iters):
        jac = np.empty((len(active), len(active)))
        for col in range(len(active)):
            h = 1e-6 * max(1.0, abs(xi[col]))
            xp = xi.copy()
            xp[col] += h
            rp, _ = eval_res(xp)
            jac[:, col] = (rp[active] - r[active]) / h
        jtj = jac.T @ jac
        jtr = jac.T @ r[active]
        accepted = False
        for _ in range(30):
            damp = jtj + mu * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                delta = np.linalg.solve(damp, -jtr)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            # cap the log-space step to keep multiplicative moves sane
            dn = np.linalg.norm(delta, ord=np.inf)
            if dn > 2.0:
                delta = delta * (2.0 / dn)
            xc = xi + delta
            rc, uc = eval_res(xc)
            nc = float(np.linalg.norm(rc[active]))
            if np.isfinite(nc) and nc < norm:
                xi, r, norm = xc, rc, nc
                u_warm[0] = uc
                mu = max(mu / 3.0, 1e-14)
                accepted = True
                break
            mu *= 4.0
        trace.append({"iter": it, "residual_norm": norm, "mu": mu})
        if norm < best[2]:
            best = (xi.copy(), r.copy(), norm)
        if norm <= tol:
            state = EqsState.from_array(_decode(xi, active, base))
            return _finish(state, r, norm, limits, pool, True, pin_boundary,
                           trace)
        stall = 0 if accepted else stall + 1
        if stall >= 2:
            break
    state = EqsState.from_array(_decode(best[0], active, base))
    sol = _finish(state, best[1], best[2], limits, pool, False, pin_boundary,
                  trace)
    raise NoConvergenceError(sol, best[2])


def _finish(state, r, norm, limits, pool, converged, pin_boundary, trace):
    chi2 = limits.chi2_bar(state)
    rt = test_risk_bar(chi2, limits.norm_sigma_new_beta_star, loss="excess-01")
    boundary = pin_boundary or state.sigma1 <= 1e-8 or state.r1 <= 1e-8
    return EqsSolution(state=state, residual_norm=norm, residual=r.copy(),
                       chi2_bar=chi2, test_risk_bar=rt, converged=converged,
                       boundary_hit=bool(boundary), solver_trace=trace)


def solve_multistart(inits: list[EqsState], pool: MCPool, limits: ChiTerms,
                     k: int, tol: float = 1e-6, max_iters: int = 120) -> EqsSolution:
    """Solve from several starts; best root wins, all roots reported."""
    roots, best = [], None
    for init in inits:
        try:
            sol = solve(init, pool, limits, k, tol=tol, max_iters=max_iters)
        except NoConvergenceError as e:
            sol = e.best
        roots.append(sol)
        if best is None or sol.residual_norm < best.residual_norm:
            best = sol
    best.extras["roots"] = [s.to_dict() for s in roots]
    return best
