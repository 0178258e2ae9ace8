import math

import numpy as np
import pytest

from augrisk.augment import AugmentationScheme, CoordinateDistribution, GroupStructure
from augrisk.covmodel import (DegenerateCovarianceError, ExperimentDims,
                              build_from_scheme, closed_form_second_moments,
                              CovarianceModel, estimate_from_samples,
                              model_from_second_moments, validate_model,
                              verify_cgmt_var_assumption)
from augrisk.linalg import fro, min_eigenvalue
from augrisk.rngs import stream


def dims_for(p, m=10, k=2):
    return ExperimentDims(p=p, m=m, k=k)


def test_dims_invariants():
    d = ExperimentDims(p=10, m=4, k=3)
    assert d.n == 12
    assert d.kappa_exact.numerator == 5 and d.kappa_exact.denominator == 6
    assert d.kappa == 10 / 12
    with pytest.raises(ValueError):
        ExperimentDims(p=0, m=1, k=1)


def test_no_augmentation_sigma_star_identity():
    p = 7
    beta = np.ones(p)
    model = build_from_scheme(AugmentationScheme(variant="none"), dims_for(p), beta)
    assert fro(model.sigma_star - np.eye(p)) < 1e-10
    assert model.kappa_star == pytest.approx(np.linalg.norm(beta) / math.sqrt(p))
    assert model.kappa_o < 1e-12
    validate_model(model)


def test_crop_sigma_star_scaled_identity():
    p, r = 10, 0.2
    c = (p - math.ceil(r * p)) / p
    model = build_from_scheme(AugmentationScheme(variant="crop", r_crop=r),
                              dims_for(p), np.ones(p))
    assert fro(model.sigma_star - c * np.eye(p)) < 1e-10
    validate_model(model)


def test_sign_flip_sigma_star_diagonal_zeros():
    p, r = 11, 0.3
    q = math.ceil(r * p)
    model = build_from_scheme(AugmentationScheme(variant="sign_flip", r_flip=r),
                              dims_for(p), np.ones(p))
    expect = np.diag([0.0] * q + [1.0] * (p - q))
    assert fro(model.sigma_star - expect) < 1e-10
    validate_model(model)


def test_permutation_sigma_star_idempotent():
    groups = GroupStructure(sizes=(4, 6), scales=(1.3, 0.4))
    p = groups.p
    scheme = AugmentationScheme(variant="permutation", r_perm=0.75, groups=groups)
    model = build_from_scheme(scheme, dims_for(p), np.ones(p))
    s = model.sigma_star
    assert fro(s @ s - s) <= 1e-10
    # head block of each group is the averaging matrix
    assert np.allclose(s[:3, :3], np.ones((3, 3)) / 3)
    assert s[3, 3] == pytest.approx(1.0)
    validate_model(model)


def test_zero_pair_covariance_gives_zero_projection():
    p = 5
    sigma_o = np.eye(p) / p
    model = model_from_second_moments(
        dims_for(p), {"variant": "custom"}, np.ones(p), sigma_o, sigma_o,
        np.zeros((p, p)), np.zeros((p, p)))
    assert fro(model.sigma_star) == 0.0
    assert fro(model.p_star) == 0.0
    assert model.kappa_star == 0.0
    rep = verify_cgmt_var_assumption(model)
    assert rep.passes_strict
    assert rep.idempotency_defect == 0.0
    assert rep.cross_consistency_defect == 0.0


def test_assumption_report_strict_for_permutation_and_flip():
    groups = GroupStructure(sizes=(5, 5))
    perm = build_from_scheme(
        AugmentationScheme(variant="permutation", r_perm=1.0, groups=groups),
        dims_for(10), np.ones(10))
    assert verify_cgmt_var_assumption(perm).passes_strict
    flip = build_from_scheme(AugmentationScheme(variant="sign_flip", r_flip=0.4),
                             dims_for(10), np.ones(10))
    assert verify_cgmt_var_assumption(flip).passes_strict


def test_assumption_report_crop_relaxed_scales():
    p, r = 10, 0.2
    c = (p - math.ceil(r * p)) / p
    model = build_from_scheme(AugmentationScheme(variant="crop", r_crop=r),
                              dims_for(p), np.ones(p))
    rep = verify_cgmt_var_assumption(model)
    assert not rep.passes_strict
    assert rep.passes_relaxed
    a1, a2 = rep.relaxed_scales
    assert a1 == pytest.approx(c, abs=1e-12)
    assert a2 == pytest.approx(c, abs=1e-12)


def test_pythagoras_when_sigma_star_projection():
    groups = GroupStructure(sizes=(6, 4))
    scheme = AugmentationScheme(variant="permutation", r_perm=1.0, groups=groups)
    beta = stream(1, 2).standard_normal(10)
    model = build_from_scheme(scheme, dims_for(10), beta)
    total = beta @ model.sigma_o @ beta
    assert model.kappa_star**2 + model.kappa_o**2 <= total + 1e-10


def test_projection_identities():
    scheme = AugmentationScheme(variant="sign_flip", r_flip=0.5)
    model = build_from_scheme(scheme, dims_for(8), np.arange(1.0, 9.0))
    assert fro(model.p_star @ model.p_star_perp) < 1e-10
    assert fro(model.p_sigma @ model.sigma - model.sigma) < 1e-10
    assert min_eigenvalue(model.sigma - model.pair_cov) >= -1e-10


def test_crop_full_raises_degenerate():
    with pytest.raises(DegenerateCovarianceError):
        build_from_scheme(AugmentationScheme(variant="crop", r_crop=1.0),
                          dims_for(5), np.ones(5))


def test_noise_injection_closed_form():
    p = 6
    d = dims_for(p, m=5, k=2)
    sigma_o, sigma, pair, cross = closed_form_second_moments(
        AugmentationScheme(variant="noise_inject", noise_var=0.7), d)
    assert np.allclose(sigma, sigma_o + 0.7 / d.n * np.eye(p))
    assert np.allclose(pair, sigma_o)
    assert np.allclose(cross, sigma_o)


def test_estimate_none_matches_sigma_o():
    p = 6
    d = dims_for(p)
    est = estimate_from_samples(AugmentationScheme(variant="none"), d,
                                CoordinateDistribution("gaussian"), 4000,
                                stream(3, 1))
    sigma_o = np.eye(p) / p
    assert np.max(np.abs(est.pair_cov - sigma_o)) < 3 * est.se_pair * 5


def test_estimate_noise_injection():
    p = 5
    d = dims_for(p, m=10, k=2)
    est = estimate_from_samples(
        AugmentationScheme(variant="noise_inject", noise_var=2.0), d,
        CoordinateDistribution("gaussian"), 20000, stream(4, 1))
    target = np.eye(p) / p + 2.0 / d.n * np.eye(p)
    assert np.max(np.abs(est.sigma - target)) < 5 * est.se_sigma * 4


def test_estimate_permutation_matches_group_average_expectation():
    # Exact expectation over the uniform permutation group at small p:
    # E[phi(z) | z] is the within-group average on every permuted coordinate,
    # so C = Var[mean] 11^T = (Var[Z_11]/p) 11^T / p ... computed directly.
    p = 4
    groups = GroupStructure(sizes=(p,))
    scheme = AugmentationScheme(variant="permutation", r_perm=1.0, groups=groups)
    d = dims_for(p)
    est = estimate_from_samples(scheme, d, CoordinateDistribution("gaussian"),
                                60000, stream(5, 1))
    var_coord = 1.0 / p
    closed = var_coord / p * np.ones((p, p))
    assert np.max(np.abs(est.pair_cov - closed)) < 4 * est.se_pair * 4
    # brute force over all permutations of a fixed small sample agrees
    import itertools
    rng = stream(5, 2)
    z = rng.standard_normal((3000, p)) / math.sqrt(p)
    perms = list(itertools.permutations(range(p)))
    mean_phi = np.zeros_like(z)
    for perm in perms:
        mean_phi += z[:, list(perm)]
    mean_phi /= len(perms)
    brute = np.cov(mean_phi.T, ddof=1)
    assert np.max(np.abs(brute - closed)) < 0.01


def test_estimate_convergence_rate():
    p = 8
    d = dims_for(p)
    scheme = AugmentationScheme(variant="sign_flip", r_flip=0.5)
    sigma_o, sigma, pair, cross = closed_form_second_moments(scheme, d)

    def deviation(n_mc, key):
        est = estimate_from_samples(scheme, d, CoordinateDistribution("gaussian"),
                                    n_mc, stream(6, key))
        return fro(est.pair_cov - pair)

    small = np.mean([deviation(2000, i) for i in range(3)])
    large = np.mean([deviation(8000, 10 + i) for i in range(3)])
    assert large < small * 0.75  # expect about half, allow stochastic slack


def test_json_round_trip():
    scheme = AugmentationScheme(variant="crop", r_crop=0.3)
    model = build_from_scheme(scheme, dims_for(6), np.ones(6))
    back = CovarianceModel.from_json(model.to_json())
    assert fro(back.sigma_star - model.sigma_star) < 1e-12
    assert back.dims == model.dims
    assert back.kappa_star == pytest.approx(model.kappa_star)
