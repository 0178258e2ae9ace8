"""Predicted test risk from the one-dimensional summary of the solution.

The prediction is E_eta[ loss(sqrt(chi2) eta, c eta) ] with a single standard
normal eta in both arguments and c the norm of the whitened signal.  Note the
shared eta makes the raw excess sign-mismatch loss vanish identically
whenever chi2 > 0; the Monte Carlo test risk of a fitted model (logit module)
is the companion estimate that carries the joint law.
"""

from __future__ import annotations

import math

import numpy as np

from ..logit import log1pexp, sigmoid

LOSSES = ("excess-01", "excess-01-smoothed", "cross-entropy", "squared")


def _loss_values(a: np.ndarray, b: np.ndarray, loss: str, delta: float) -> np.ndarray:
    if loss == "excess-01":
        mismatch = (a > 0) != (b > 0)
        return np.where(mismatch, np.abs(2.0 * sigmoid(b) - 1.0), 0.0)
    if loss == "excess-01-smoothed":
        ramp = sigmoid(-np.sign(b) * a / delta)
        return np.abs(2.0 * sigmoid(b) - 1.0) * ramp
    if loss == "cross-entropy":
        return log1pexp(a) - sigmoid(b) * a
    if loss == "squared":
        return (a - b) ** 2
    raise ValueError(f"unknown loss {loss!r}")


def test_risk_bar(chi2_bar: float, norm_sigma_new_beta_star: float,
                  loss: str = "excess-01", n_mc: int = 0,
                  rng: np.random.Generator | None = None,
                  n_gh: int = 64, delta: float = 1e-3) -> float:
    """Gauss-Hermite (default) or Monte Carlo evaluation of the prediction."""
    if chi2_bar < 0:
        raise ValueError("chi2_bar must be nonnegative")
    if n_mc > 0:
        if rng is None:
            raise ValueError("Monte Carlo mode needs an rng")
        eta = rng.standard_normal(n_mc)
        w = np.full(n_mc, 1.0 / n_mc)
    else:
        eta, w = np.polynomial.hermite_e.hermegauss(n_gh)
        w = w / math.sqrt(2.0 * math.pi)
    a = math.sqrt(chi2_bar) * eta
    b = norm_sigma_new_beta_star * eta
    return float(w @ _loss_values(a, b, loss, delta))
