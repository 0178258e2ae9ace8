"""Independent six-equation solver for the isotropic unaugmented case.

This module is a cross-check oracle for the ten-equation path and must stay
independent of it: it has its own scalar proximal solver and evaluates all
expectations by tensor Gauss-Hermite quadrature over the two effective
Gaussians.  With gamma = 1/(r2 nu2) and Prox the scalar proximal map of
rho(x) = log(1 + e^x), the system in (alpha, sigma2, gamma) is

    sigma2^2 kappa / 2 = E[ rho'(-ks Z1) (q - Prox_g(q))^2 ],
    1 - kappa + gamma lambda kappa
        = E[ 2 rho'(-ks Z1) / (1 + gamma rho''(Prox_g(q))) ],
    -alpha kappa / 2 = E[ rho''(-ks Z1) Prox_g(q) ],

with q = alpha ks Z1 + sigma2 Z2, ks the signal magnitude, and the remaining
three variables recovered from

    theta = alpha kappa / gamma,
    tau2 = gamma / (kappa sigma2 (1 - gamma lambda)),
    r2 = sigma2 sqrt(kappa) / gamma.

The ridge here weighs lambda/(2n) ||beta||^2; the per-dimension convention
lambda/(2p) ||beta||^2 is accommodated by rescaling lambda by kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize


class IsoNoConvergenceError(RuntimeError):
    pass


def _sigmoid(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _prox(v, gamma):
    """Scalar proximal map of the logistic loss.

    The first-order condition x - v + gamma sigmoid(x) = 0 is strictly
    increasing in x with a sign change on [v - gamma, v], so Newton is
    safeguarded by that bracket (bisect whenever the Newton step leaves it).
    """
    v = np.asarray(v, dtype=float)
    lo, hi = v - gamma, v.copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f = mid - v + gamma * _sigmoid(mid)
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f <= 0, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(3):
        sig = _sigmoid(x)
        x = x - (x - v + gamma * sig) / (1.0 + gamma * sig * (1.0 - sig))
    return x


@dataclass(frozen=True)
class IsoSolution:
    alpha: float
    sigma2: float
    tau2: float
    r2: float
    gamma: float
    theta: float
    residual_norm: float

    @property
    def nu2(self) -> float:
        return 1.0 / (self.gamma * self.r2)


def _grid(n_gh: int):
    x, w = np.polynomial.hermite_e.hermegauss(n_gh)
    w = w / math.sqrt(2.0 * math.pi)
    z1 = np.repeat(x, n_gh)
    z2 = np.tile(x, n_gh)
    ww = np.repeat(w, n_gh) * np.tile(w, n_gh)
    return z1, z2, ww


def iso_residuals(alpha: float, sigma2: float, gamma: float, kappa: float,
                  lam: float, kappa_bar_star: float, grid) -> np.ndarray:
    z1, z2, w = grid
    ks = kappa_bar_star
    q = alpha * ks * z1 + sigma2 * z2
    pr = _prox(q, gamma)
    sig_prox = _sigmoid(pr)
    rho1 = _sigmoid(-ks * z1)
    rho2_neg = rho1 * (1.0 - rho1)

    e_sq = float(w @ (rho1 * (q - pr) ** 2))
    e_res = float(w @ (2.0 * rho1 / (1.0 + gamma * sig_prox * (1.0 - sig_prox))))
    e_cross = float(w @ (rho2_neg * pr))
    return np.array([
        0.5 * sigma2**2 * kappa - e_sq,
        (1.0 - kappa + gamma * lam * kappa) - e_res,
        -0.5 * alpha * kappa - e_cross,
    ])


def isotropic_oracle_solve(kappa: float, lam: float, kappa_bar_star: float = 1.0,
                           tol: float = 1e-10, n_gh: int = 80,
                           lambda_convention: str = "per-n") -> IsoSolution:
    """Solve the three reduced equations, then recover the other variables."""
    if kappa <= 0 or lam <= 0:
        raise ValueError("kappa and lambda must be positive")
    if lambda_convention == "per-p":
        lam = lam * kappa
    elif lambda_convention != "per-n":
        raise ValueError("lambda_convention must be 'per-n' or 'per-p'")
    grid = _grid(n_gh)

    def packed(xi):
        alpha, log_s, log_g = xi
        return iso_residuals(alpha, math.exp(log_s), math.exp(log_g),
                             kappa, lam, kappa_bar_star, grid)

    best = None
    for alpha0, s0, g0 in ((1.0, 1.0, 1.0), (0.5, 2.0, 3.0), (2.0, 0.5, 0.3),
                           (1.5, 3.0, 8.0)):
        sol = optimize.root(packed, np.array([alpha0, math.log(s0), math.log(g0)]),
                            method="hybr", tol=1e-13)
        norm = float(np.linalg.norm(packed(sol.x)))
        if best is None or norm < best[1]:
            best = (sol.x, norm)
        if norm <= tol:
            break
    x, norm = best
    if norm > max(tol, 1e-8):
        raise IsoNoConvergenceError(f"residual norm {norm:.3e}")
    alpha, sigma2, gamma = float(x[0]), math.exp(x[1]), math.exp(x[2])
    if gamma * lam >= 1.0:
        raise IsoNoConvergenceError("gamma lambda >= 1: tau2 leaves the domain")
    theta = alpha * kappa / gamma
    tau2 = gamma / (kappa * sigma2 * (1.0 - gamma * lam))
    r2 = sigma2 * math.sqrt(kappa) / gamma
    return IsoSolution(alpha=alpha, sigma2=sigma2, tau2=tau2, r2=r2,
                       gamma=gamma, theta=theta, residual_norm=norm)


def iso_residuals_full(sol: IsoSolution, kappa: float, lam: float,
                       kappa_bar_star: float = 1.0, n_gh: int = 80) -> np.ndarray:
    """All six equation residuals at a candidate point (identities included)."""
    grid = _grid(n_gh)
    core = iso_residuals(sol.alpha, sol.sigma2, sol.gamma, kappa, lam,
                         kappa_bar_star, grid)
    idents = np.array([
        sol.theta - sol.alpha * kappa / sol.gamma,
        sol.tau2 - sol.gamma / (kappa * sol.sigma2 * (1.0 - sol.gamma * lam)),
        sol.r2 - sol.sigma2 * math.sqrt(kappa) / sol.gamma,
    ])
    return np.concatenate([idents, core])
