"""Second-moment objects of the augmented data model.

For original rows Z with Var[Z] = sigma_o and i.i.d. transforms phi_1, phi_2,
the model collects

    sigma      = Var[phi_1(Z)]
    pair_cov   = Cov[phi_1(Z), phi_2(Z)]          (C)
    cross_cov  = Cov[phi_1(Z), Z]                 (D)
    sigma_star = pinv_sqrt(sigma) C pinv_sqrt(sigma)

plus the projections and split covariances derived from them.  Closed forms
exist for every built-in scheme; `estimate_from_samples` is the Monte Carlo
fallback for anything else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .augment import (AugmentationScheme, CoordinateDistribution,
                      GroupStructure, apply_transform, sample_original)
from .linalg import (fro, min_eigenvalue, psd_pinv, psd_pinv_sqrt, psd_sqrt,
                     range_projection, sym)

SCHEMA_VERSION = 1

# Branch threshold for P_*: below this, sigma_star sigma_o^{1/2} beta_star is
# treated as exactly zero and P_* is the zero matrix.
P_STAR_NULL_FACTOR = 1e-10


class UnsupportedSchemeError(ValueError):
    """No closed-form covariances for this scheme; estimate from samples."""


class DegenerateCovarianceError(ValueError):
    """The augmented covariance has numerically zero trace."""


@dataclass(frozen=True)
class ExperimentDims:
    """Problem sizes: p coordinates, m originals, k augmentations per original."""

    p: int
    m: int
    k: int

    def __post_init__(self):
        if self.p < 1 or self.m < 1 or self.k < 1:
            raise ValueError("p, m, k must all be >= 1")

    @property
    def n(self) -> int:
        return self.m * self.k

    @property
    def kappa_exact(self) -> Fraction:
        return Fraction(self.p, self.n)

    @property
    def kappa(self) -> float:
        return float(self.kappa_exact)


@dataclass(frozen=True)
class CovarianceModel:
    dims: ExperimentDims
    scheme: dict
    beta_star: np.ndarray
    sigma_o: np.ndarray
    sigma: np.ndarray
    pair_cov: np.ndarray
    cross_cov: np.ndarray
    sigma_star: np.ndarray
    p_star: np.ndarray
    p_star_perp: np.ndarray
    p_sigma: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    kappa_star: float
    kappa_o: float
    v_beta_star: np.ndarray

    def to_json(self) -> str:
        """Documented schema: matrices as row-major nested lists."""
        payload = {
            "schema_version": SCHEMA_VERSION,
            "dims": {"p": self.dims.p, "m": self.dims.m, "k": self.dims.k},
            "scheme": self.scheme,
            "beta_star": self.beta_star.tolist(),
            "matrices": {
                name: getattr(self, name).tolist()
                for name in ("sigma_o", "sigma", "pair_cov", "cross_cov")
            },
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "CovarianceModel":
        payload = json.loads(text)
        if payload["schema_version"] != SCHEMA_VERSION:
            raise ValueError("unsupported schema version")
        dims = ExperimentDims(**payload["dims"])
        mats = {k: np.asarray(v, dtype=float) for k, v in payload["matrices"].items()}
        return model_from_second_moments(
            dims=dims, scheme=payload["scheme"],
            beta_star=np.asarray(payload["beta_star"], dtype=float), **mats)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of checking the idempotent-projection covariance conditions."""

    idempotency_defect: float
    cross_consistency_defect: float
    relaxed_scales: tuple[float, float] | None
    passes_strict: bool
    passes_relaxed: bool
    tol: float


def model_from_second_moments(dims: ExperimentDims, scheme: dict,
                              beta_star: np.ndarray, sigma_o: np.ndarray,
                              sigma: np.ndarray, pair_cov: np.ndarray,
                              cross_cov: np.ndarray) -> CovarianceModel:
    """Derive every projection/split object from (sigma_o, sigma, C, D)."""
    p = dims.p
    if np.trace(sigma) <= 0.0:
        raise DegenerateCovarianceError("Var[phi(Z)] has zero trace")
    sigma_o = sym(np.asarray(sigma_o, dtype=float))
    sigma = sym(np.asarray(sigma, dtype=float))
    pair_cov = np.asarray(pair_cov, dtype=float)
    cross_cov = np.asarray(cross_cov, dtype=float)

    sig_pinv_sqrt = psd_pinv_sqrt(sigma)
    sigma_star = sym(sig_pinv_sqrt @ sym(pair_cov) @ sig_pinv_sqrt)
    p_sigma = range_projection(sigma)

    root_o = psd_sqrt(sigma_o)
    direction = sigma_star @ root_o @ beta_star
    kappa_star = float(np.linalg.norm(direction))
    null_cut = P_STAR_NULL_FACTOR * np.linalg.norm(beta_star) / math.sqrt(p)
    if kappa_star < null_cut:
        p_star = np.zeros((p, p))
        kappa_star = 0.0
        v_beta_star = np.zeros(p)
    else:
        p_star = np.outer(direction, direction) / kappa_star**2
        v_beta_star = math.sqrt(p) * direction
    p_star_perp = np.eye(p) - p_star
    kappa_o = float(np.linalg.norm((np.eye(p) - sigma_star) @ root_o @ beta_star))

    root = psd_sqrt(sigma)
    sigma1 = sym(root @ p_star_perp @ (np.eye(p) - sigma_star) @ p_star_perp @ root)
    sigma2 = sym(root @ p_star_perp @ sigma_star @ p_star_perp @ root)

    return CovarianceModel(
        dims=dims, scheme=scheme, beta_star=np.asarray(beta_star, dtype=float),
        sigma_o=sigma_o, sigma=sigma, pair_cov=pair_cov, cross_cov=cross_cov,
        sigma_star=sigma_star, p_star=p_star, p_star_perp=p_star_perp,
        p_sigma=p_sigma, sigma1=sigma1, sigma2=sigma2,
        kappa_star=kappa_star, kappa_o=kappa_o, v_beta_star=v_beta_star)


def closed_form_second_moments(scheme: AugmentationScheme, dims: ExperimentDims,
                               groups: GroupStructure | None = None):
    """Exact (sigma_o, sigma, C, D) for the built-in schemes.

    sigma_o is diagonal: scale_t^2 / p per coordinate of group t (the law of
    the standardized originals).  Permutation takes its groups from the
    scheme; sign flip and crop accept any diagonal sigma_o via `groups`.
    """
    p = dims.p
    if scheme.variant == "permutation":
        # scheme.groups fixes the permutation blocks; a groups argument may
        # override the variance profile but must tile identically.
        if groups is None:
            groups = scheme.groups
        elif tuple(groups.sizes) != tuple(scheme.groups.sizes):
            raise ValueError("variance groups must match the permutation blocks")
    if groups is None:
        groups = GroupStructure.single(p)
    if groups.p != p:
        raise ValueError("group sizes must sum to p")
    diag_o = groups.coordinate_scales() ** 2 / p
    sigma_o = np.diag(diag_o)

    if scheme.variant == "none":
        return sigma_o, sigma_o.copy(), sigma_o.copy(), sigma_o.copy()

    if scheme.variant == "noise_inject":
        sigma = sigma_o + (scheme.noise_var / dims.n) * np.eye(p)
        return sigma_o, sigma, sigma_o.copy(), sigma_o.copy()

    if scheme.variant == "permutation":
        # Within each group, E[phi(Z) | Z] averages the permuted head; the
        # conditional-variance split gives C = D = Var E[phi(Z) | Z].
        pair = np.zeros((p, p))
        for sl, size, var in zip(groups.slices(), groups.sizes,
                                 groups.effective_scales() ** 2 / p):
            top = math.ceil(scheme.r_perm * size)
            a, b = sl.start, sl.start + top
            if top >= 1:
                pair[a:b, a:b] = var / top
            idx = np.arange(b, sl.stop)
            pair[idx, idx] = var
        return sigma_o, sigma_o.copy(), pair, pair.copy()

    if scheme.variant == "sign_flip":
        idx = scheme.flip_set(p)
        keep = np.ones(p)
        keep[idx] = 0.0
        # Hadamard masks: coordinates with exactly one flipped member decorrelate.
        both_diag = np.outer(keep, keep) + np.diag(1.0 - keep)
        sigma = sigma_o * both_diag
        pair = sigma_o * np.outer(keep, keep)
        cross = np.diag(keep) @ sigma_o
        return sigma_o, sigma, pair, cross

    if scheme.variant == "crop":
        total = scheme.n_crop(p)
        if total >= p:
            raise DegenerateCovarianceError("crop removes every coordinate")
        if scheme.forced_indices is not None:
            keep_prob = np.ones(p)
            forced = np.asarray(scheme.forced_indices, dtype=int)
            keep_prob[forced] = 0.0
            rest = p - forced.size
            extra = total - forced.size
            if extra > 0:
                keep_prob[keep_prob == 1.0] = (rest - extra) / rest
                pair_rest = ((rest - extra) * (rest - extra - 1) /
                             (rest * (rest - 1))) if rest > 1 else 0.0
            else:
                pair_rest = 1.0
            both = np.outer(keep_prob > 0, keep_prob > 0) * pair_rest
            np.fill_diagonal(both, keep_prob)
            sigma = sigma_o * both
            pair = sigma_o * np.outer(keep_prob, keep_prob)
            cross = np.diag(keep_prob) @ sigma_o
            return sigma_o, sigma, pair, cross
        c1 = (p - total) / p
        c2 = (p - total) * (p - total - 1) / (p * (p - 1)) if p > 1 else 0.0
        both = np.full((p, p), c2)
        np.fill_diagonal(both, c1)
        sigma = sigma_o * both
        pair = c1 * c1 * sigma_o
        cross = c1 * sigma_o
        return sigma_o, sigma, pair, cross

    raise UnsupportedSchemeError(
        f"no closed form for scheme {scheme.variant!r}; use estimate_from_samples")


def build_from_scheme(scheme: AugmentationScheme, dims: ExperimentDims,
                      beta_star: np.ndarray,
                      groups: GroupStructure | None = None) -> CovarianceModel:
    """Closed-form covariance model for a built-in scheme."""
    sigma_o, sigma, pair, cross = closed_form_second_moments(scheme, dims, groups)
    return model_from_second_moments(dims, scheme.descriptor(), beta_star,
                                     sigma_o, sigma, pair, cross)


@dataclass(frozen=True)
class EstimatedCovariances:
    sigma: np.ndarray
    pair_cov: np.ndarray
    cross_cov: np.ndarray
    se_sigma: float
    se_pair: float
    se_cross: float
    n_mc: int


def estimate_from_samples(scheme: AugmentationScheme, dims: ExperimentDims,
                          distribution: CoordinateDistribution, n_mc: int,
                          rng: np.random.Generator,
                          groups: GroupStructure | None = None) -> EstimatedCovariances:
    """Monte Carlo (sigma, C, D) estimates with entrywise standard errors.

    Two independent transforms are applied to each of n_mc original draws;
    products are averaged without bias correction beyond the 1/(n-1) factor.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be >= 1000")
    p = dims.p
    if scheme.variant == "permutation":
        groups = scheme.groups
    if groups is None:
        groups = GroupStructure.single(p)
    z = sample_original(distribution, groups, n_mc, p, rng)
    x1 = apply_transform(z, scheme, rng, total_rows=dims.n)
    x2 = apply_transform(z, scheme, rng, total_rows=dims.n)

    def cov(a, b):
        a0 = a - a.mean(axis=0)
        b0 = b - b.mean(axis=0)
        est = a0.T @ b0 / (n_mc - 1)
        mean_prod = est * (n_mc - 1) / n_mc
        second = (a0**2).T @ (b0**2) / n_mc
        se = float(np.sqrt(np.mean(np.maximum(second - mean_prod**2, 0.0)) / n_mc))
        return est, se

    sig, se_s = cov(x1, x1)
    pair, se_p = cov(x1, x2)
    cross, se_c = cov(x1, z)
    return EstimatedCovariances(sigma=sym(sig), pair_cov=0.5 * (pair + pair.T),
                                cross_cov=cross, se_sigma=se_s, se_pair=se_p,
                                se_cross=se_c, n_mc=n_mc)


def verify_cgmt_var_assumption(model: CovarianceModel, tol: float = 1e-8) -> AssumptionReport:
    """Check the idempotent-projection covariance conditions, strict then relaxed.

    Strict: sigma_star equals the whitened cross-covariance
    pinv_sqrt(sigma) D pinv_sqrt(sigma_o) and sigma_star^2 = sigma_star.
    Relaxed: both hold up to positive scales (a1, a2), fitted by least
    squares.  The a1 fit uses the pinv(sigma) D normalization of the
    cross-covariance, under which the cropping scales take their closed-form
    value (p - ceil(r_crop p)) / p; for every scheme that passes strict the
    two normalizations coincide.
    """
    s_star = model.sigma_star
    scale = max(1.0, fro(s_star))
    idem = fro(s_star @ s_star - s_star)
    whitened = psd_pinv_sqrt(model.sigma) @ model.cross_cov @ psd_pinv_sqrt(model.sigma_o)
    cross = fro(s_star - whitened)
    strict = idem <= tol * scale and cross <= tol * scale

    x2 = psd_pinv(model.sigma) @ model.cross_cov
    denom_a2 = float(np.sum(s_star * s_star))
    denom_a1 = float(np.sum(x2 * x2))
    relaxed_scales = None
    relaxed = False
    if denom_a2 > 0 and denom_a1 > 0:
        a2 = float(np.sum((s_star @ s_star) * s_star)) / denom_a2
        a1 = float(np.sum(s_star * x2)) / denom_a1
        res2 = fro(s_star @ s_star - a2 * s_star)
        res1 = fro(s_star - a1 * x2)
        if a1 > 0 and a2 > 0 and res1 <= tol * scale and res2 <= tol * scale:
            relaxed_scales = (a1, a2)
            relaxed = True
    return AssumptionReport(idempotency_defect=idem, cross_consistency_defect=cross,
                            relaxed_scales=relaxed_scales, passes_strict=strict,
                            passes_relaxed=relaxed, tol=tol)


def validate_model(model: CovarianceModel, tol: float = 1e-10) -> None:
    """Raise if any structural invariant fails.

    sigma_o and sigma must be PSD, sigma - C PSD, the projections must be
    projections, and P_Sigma must fix the range of sigma.
    """
    checks = {
        "sigma_o psd": min_eigenvalue(model.sigma_o) >= -tol,
        "sigma psd": min_eigenvalue(model.sigma) >= -tol,
        "sigma - pair_cov psd": min_eigenvalue(model.sigma - model.pair_cov) >= -tol,
        "p_star idempotent": fro(model.p_star @ model.p_star - model.p_star) <= 1e-10,
        "p_star + p_star_perp = I": fro(model.p_star + model.p_star_perp
                                        - np.eye(model.dims.p)) <= 1e-10,
        "p_sigma fixes sigma": fro(model.p_sigma @ model.sigma - model.sigma)
                               <= 1e-10 * max(1.0, fro(model.sigma)),
        "sigma_star symmetric": fro(model.sigma_star - model.sigma_star.T) <= 1e-12,
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise ValueError("covariance model invariants failed: " + ", ".join(failed))
