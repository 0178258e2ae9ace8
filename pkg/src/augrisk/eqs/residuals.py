"""Residual map of the ten-variable fixed-point system.

The residual vector is the exact gradient of the pooled deterministic
objective `do_value` in the order (alpha, sigma1, sigma2, tau1, tau2, nu1,
nu2, r1, r2, theta).  Expectations are replaced by weighted pool averages
with common random numbers; the envelope terms are the per-sample partial
derivatives of the proximal subproblem's objective at its minimizer, so the
residuals and the pooled objective stay exactly consistent at any pool size
(the zero-mean sampling terms they carry beyond the population equations
vanish as the pool grows).
"""

from __future__ import annotations

import numpy as np

from .chi import ChiTerms
from .prox import prox_batch, ProxDiagnostics
from .state import EqsState, MCPool


class NonFiniteResidualError(RuntimeError):
    def __init__(self, indices):
        super().__init__(f"non-finite residual at equation indices {indices}")
        self.indices = indices


def _pool_terms(state: EqsState, pool: MCPool, limits: ChiTerms,
                u0=None, diag: ProxDiagnostics | None = None):
    """Prox minimizers and every pooled expectation the system needs."""
    kstar = limits.kappa_bar_star
    ko = limits.kappa_bar_o
    k = pool.k
    ybar, w = pool.labels_and_weights(ko, kstar)
    u = prox_batch(state, pool, kstar, ybar, u0=u0, diag=diag)

    gamma = state.gamma
    shift = gamma * ybar + state.alpha * kstar * pool.z1
    c2 = shift[:, None] - state.sigma1 * pool.eta - state.sigma2 * pool.z2[:, None]
    t1 = -state.sigma1 * pool.eta
    dev = (u - t1) - (u - t1).mean(axis=1, keepdims=True)   # Pperp(u + sigma1 eta)
    s_bar = (u - c2).sum(axis=1)                            # 1' Pbar(u - c2)

    def avg(vals):
        return float(w @ vals)

    terms = {
        "E_ybar": avg(ybar),
        "E_y_z1": avg(ybar * pool.z1),
        "E_z1_S": avg(pool.z1 * s_bar),
        "E_z2_S": avg(pool.z2 * s_bar),
        "E_eta_perp": avg((pool.eta * dev).sum(axis=1)),
        "E_etabar_S": avg(pool.eta.mean(axis=1) * s_bar),
        "E_perp_sq": avg((dev**2).sum(axis=1)),
        "E_bar_sq": avg(s_bar**2) / k,                      # ||Pbar(u - c2)||^2
        "E_y_S": avg(ybar * s_bar),
    }
    return u, terms


def residuals(state: EqsState, pool: MCPool, limits: ChiTerms, k: int,
              u0=None, return_u: bool = False):
    """The ten stationarity residuals at `state`.

    Pure in (state, pool, limits): repeated evaluation is bit-identical.
    Raises NonFiniteResidualError naming the offending equations.
    """
    if k != pool.k:
        raise ValueError("pool was built for a different k")
    u, t = _pool_terms(state, pool, limits, u0=u0)
    ks2 = limits.kappa_bar_star**2
    kstar = limits.kappa_bar_star
    a1, s1, s2 = state.alpha, state.sigma1, state.sigma2
    tau1, tau2, nu1, nu2 = state.tau1, state.tau2, state.nu1, state.nu2
    r1, r2, theta = state.r1, state.r2, state.theta
    b = r2 * nu2
    dchi = limits.chi1_partials(state)

    d_alpha_m = -(b * kstar / k) * t["E_z1_S"]
    d_sigma1_m = (r1 * nu1 / k) * t["E_eta_perp"] + (b / k) * t["E_etabar_S"]
    d_sigma2_m = (b / k) * t["E_z2_S"]
    d_nu1_m = (r1 / (2.0 * k)) * t["E_perp_sq"]
    d_nu2_m = (r2 / (2.0 * k)) * t["E_bar_sq"] + t["E_y_S"] / (nu2 * k)
    d_r1_m = (nu1 / (2.0 * k)) * t["E_perp_sq"]
    d_r2_m = (nu2 / (2.0 * k)) * t["E_bar_sq"] + t["E_y_S"] / (r2 * k)

    r = np.array([
        theta * ks2 - a1 * ks2 / (s2 * tau2) - kstar * t["E_y_z1"] + d_alpha_m,
        -0.5 / tau1 - dchi["sigma1"] + d_sigma1_m,
        -0.5 / tau2 + a1**2 * ks2 / (2.0 * s2**2 * tau2) - dchi["sigma2"] + d_sigma2_m,
        s1 / (2.0 * tau1**2) - dchi["tau1"],
        s2 / (2.0 * tau2**2) + a1**2 * ks2 / (2.0 * s2 * tau2**2) - dchi["tau2"],
        -r1 / (2.0 * nu1**2) + d_nu1_m,
        -r2 / (2.0 * nu2**2) + t["E_ybar"] / (2.0 * r2 * nu2**2) + d_nu2_m,
        0.5 / nu1 - dchi["r1"] + d_r1_m,
        0.5 / nu2 + t["E_ybar"] / (2.0 * r2**2 * nu2) - dchi["r2"] + d_r2_m,
        a1 * ks2 - dchi["theta"],
    ])
    bad = np.flatnonzero(~np.isfinite(r))
    if bad.size:
        raise NonFiniteResidualError(bad.tolist())
    if return_u:
        return r, u
    return r


def moreau_value(state: EqsState, pool: MCPool, limits: ChiTerms,
                 u0=None) -> float:
    """Pooled expected value of the proximal subproblem at its minimizer."""
    k = pool.k
    kstar = limits.kappa_bar_star
    ybar, w = pool.labels_and_weights(limits.kappa_bar_o, kstar)
    u = prox_batch(state, pool, kstar, ybar, u0=u0)
    gamma = state.gamma
    shift = gamma * ybar + state.alpha * kstar * pool.z1
    c2 = shift[:, None] - state.sigma1 * pool.eta - state.sigma2 * pool.z2[:, None]
    t1 = -state.sigma1 * pool.eta
    dev = (u - t1) - (u - t1).mean(axis=1, keepdims=True)
    bar = (u - c2).mean(axis=1)
    a = state.r1 * state.nu1
    b = state.r2 * state.nu2
    rho = np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))
    vals = (rho.sum(axis=1) + 0.5 * a * (dev**2).sum(axis=1)
            + 0.5 * b * k * bar**2) / k
    return float(w @ vals)


def do_value(state: EqsState, pool: MCPool, limits: ChiTerms, k: int,
             eps_s: float = 0.0) -> float:
    """Pooled deterministic objective whose gradient is `residuals`."""
    if k != pool.k:
        raise ValueError("pool was built for a different k")
    kstar = limits.kappa_bar_star
    ks2 = kstar**2
    ybar, w = pool.labels_and_weights(limits.kappa_bar_o, kstar)
    e_ybar = float(w @ ybar)
    e_y_z1 = float(w @ (ybar * pool.z1))
    val = (-state.sigma1 / (2.0 * state.tau1) - state.sigma2 / (2.0 * state.tau2)
           + state.r1 / (2.0 * state.nu1) + state.r2 / (2.0 * state.nu2)
           + state.alpha * state.theta * ks2
           - state.alpha**2 * ks2 / (2.0 * state.sigma2 * state.tau2)
           - limits.chi1_bar(state)
           - e_ybar / (2.0 * state.r2 * state.nu2)
           - state.alpha * kstar * e_y_z1
           + moreau_value(state, pool, limits))
    if eps_s != 0.0:
        val += eps_s**2 * limits.chi3_bar(state) / limits.chi2_bar(state)
    return val
