"""Scalar state and sample pools for the deterministic fixed-point system."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

VAR_NAMES = ("alpha", "sigma1", "sigma2", "tau1", "tau2",
             "nu1", "nu2", "r1", "r2", "theta")

# Residual i is the stationarity condition in VAR_NAMES[i]; nonnegative
# variables and the cap used when a variable is driven to +infinity.
NONNEG = frozenset({"sigma1", "sigma2", "tau1", "tau2", "nu1", "nu2", "r1", "r2"})
LARGE_CAP = 1e6
GAMMA_CAP = 1e6


@dataclass(frozen=True)
class EqsState:
    """The ten scalars of the fixed-point system."""

    alpha: float
    sigma1: float
    sigma2: float
    tau1: float
    tau2: float
    nu1: float
    nu2: float
    r1: float
    r2: float
    theta: float

    @property
    def gamma(self) -> float:
        """1 / (r2 nu2), capped; blows up when the product degenerates."""
        prod = self.r2 * self.nu2
        if prod <= 1.0 / GAMMA_CAP:
            return GAMMA_CAP
        return 1.0 / prod

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in VAR_NAMES])

    @staticmethod
    def from_array(x: np.ndarray) -> "EqsState":
        return EqsState(**{name: float(v) for name, v in zip(VAR_NAMES, x)})

    def replace(self, **kw) -> "EqsState":
        return replace(self, **kw)


@dataclass(frozen=True)
class MCPool:
    """Fixed sample pool for the expectations in the residual map.

    Two modes.  Monte Carlo: weight 1/N, logistic draws eps, and the label
    indicator is computed from (kappa_o, kappa_star) at evaluation time.
    Enumerated: deterministic (quadrature) nodes, each duplicated into label
    branches 0 and 1 whose weights pick up the conditional label probability
    at evaluation time; eta is all-zero and only valid on the
    no-augmentation boundary (sigma1 = 0), where it never enters.
    """

    z0: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    eta: np.ndarray
    base_weight: np.ndarray
    eps: np.ndarray | None = None
    ybar_branch: np.ndarray | None = None

    def __post_init__(self):
        if (self.eps is None) == (self.ybar_branch is None):
            raise ValueError("exactly one of eps / ybar_branch must be set")

    @property
    def n_samples(self) -> int:
        return self.z1.shape[0]

    @property
    def k(self) -> int:
        return self.eta.shape[1]

    @property
    def enumerated(self) -> bool:
        return self.ybar_branch is not None

    def labels_and_weights(self, kappa_o: float, kappa_star: float):
        """Per-sample label indicator and weights given the signal split."""
        s = kappa_o * self.z0 + kappa_star * self.z1
        if self.eps is not None:
            ybar = (s - self.eps >= 0).astype(float)
            return ybar, self.base_weight
        p1 = 1.0 / (1.0 + np.exp(-s))
        ybar = self.ybar_branch.astype(float)
        w = self.base_weight * np.where(ybar > 0.5, p1, 1.0 - p1)
        return ybar, w

    @staticmethod
    def monte_carlo(n_samples: int, k: int, rng: np.random.Generator) -> "MCPool":
        return MCPool(
            z0=rng.standard_normal(n_samples),
            z1=rng.standard_normal(n_samples),
            z2=rng.standard_normal(n_samples),
            eta=rng.standard_normal((n_samples, k)),
            base_weight=np.full(n_samples, 1.0 / n_samples),
            eps=rng.logistic(0.0, 1.0, n_samples))

    @staticmethod
    def quadrature(k: int, n_nodes: int = 80, with_z0: bool = False,
                   n_nodes_z0: int = 24) -> "MCPool":
        """Tensor Gauss-Hermite nodes over (z1, z2[, z0]) with label branches.

        Intended for the no-augmentation boundary (sigma1 = r1 = 0): eta is
        identically zero there, which matches its exact mean under every
        expectation in which it would otherwise appear.
        """
        x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        w = w / np.sqrt(2.0 * np.pi)
        if with_z0:
            x0, w0 = np.polynomial.hermite_e.hermegauss(n_nodes_z0)
            w0 = w0 / np.sqrt(2.0 * np.pi)
        else:
            x0, w0 = np.zeros(1), np.ones(1)
        z0g, z1g, z2g = np.meshgrid(x0, x, x, indexing="ij")
        wg = (w0[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
        z0g, z1g, z2g = z0g.ravel(), z1g.ravel(), z2g.ravel()
        # Duplicate every node into the two label branches.
        reps = 2
        n = z1g.size
        return MCPool(
            z0=np.tile(z0g, reps), z1=np.tile(z1g, reps), z2=np.tile(z2g, reps),
            eta=np.zeros((reps * n, k)),
            base_weight=np.tile(wg, reps),
            ybar_branch=np.repeat(np.array([0.0, 1.0]), n))
