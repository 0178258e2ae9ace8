import numpy as np
import pytest

from augrisk.augment import AugmentationScheme
from augrisk.covmodel import ExperimentDims, build_from_scheme
from augrisk.eqs import ChiTerms, EqsState, chi_terms
from augrisk.rngs import stream


def iso_model(p=60, kappa=1.5):
    dims = ExperimentDims(p, max(1, int(round(p / kappa))), 1)
    return build_from_scheme(AugmentationScheme(variant="none"), dims, np.ones(p))


def test_isotropic_closed_forms():
    p, kappa, lam = 80, 2.0, 0.3
    model = iso_model(p, kappa)
    m_eff = p / kappa
    chi = ChiTerms(model, model.sigma_o, lam, m_eff, k=1)
    for s in (0.3, 1.7, 9.0):
        assert chi.chi12(s) == pytest.approx(kappa / (s * lam * kappa + 1), rel=1e-12)
        assert chi.chi13(s) == pytest.approx(1 / (s * lam * kappa + 1), rel=1e-12)
        assert chi.chi11(s) == 0.0
        assert chi.chi21(s) == 0.0
        assert chi.chi22(s) == pytest.approx(kappa / (s * lam * kappa + 1) ** 2,
                                             rel=1e-10)
        assert chi.chi23(s) == pytest.approx(1 / (s * lam * kappa + 1) ** 2,
                                             rel=1e-10)


def test_lambda_zero_limit_is_projection_trace():
    p, kappa = 40, 1.0
    model = iso_model(p, kappa)
    m_eff = p / kappa
    chi = ChiTerms(model, model.sigma_o, 1e-14, m_eff, k=1)
    assert chi.chi12(5.0) == pytest.approx(np.trace(model.sigma_star) / m_eff,
                                           rel=1e-9)


def test_sign_flip_trace_formula_matches_coordinate_sum():
    p, q, lam, m = 50, 13, 0.07, 30
    scheme = AugmentationScheme(variant="sign_flip",
                                flip_indices=tuple(range(q)))
    dims = ExperimentDims(p, m, 2)
    model = build_from_scheme(scheme, dims, np.ones(p))
    chi = ChiTerms(model, model.sigma_o, lam, m, k=2)
    s = 2.3
    n = m * 2
    f = 1.0 / (1.0 + s * lam * p / n)  # scalar resolvent on every coordinate
    assert chi.chi11(s) == pytest.approx(q * f / m, rel=1e-12)
    assert chi.chi12(s) == pytest.approx((p - q) * f / m, rel=1e-12)
    assert chi.chi13(s) == pytest.approx(f, rel=1e-12)


def test_chi3_isotropic_relation_to_chi2():
    # with Sigma and the projections all scalar, the mixed-penalty prefactor
    # is ((lam kappa + 1/s)/2)^{1/2} I on the relevant subspace
    p, kappa, lam = 30, 1.2, 0.15
    model = iso_model(p, kappa)
    m_eff = p / kappa
    chi = ChiTerms(model, model.sigma_o, lam, m_eff, k=1)
    s = 1.9
    factor = (lam * kappa + 1.0 / s) / 2.0
    assert chi.chi3(1, s, s) == pytest.approx(factor * chi.chi22(s), rel=1e-8)
    assert chi.chi3(2, s, s) == pytest.approx(factor * chi.chi23(s), rel=1e-8)


def test_chi1_partials_match_finite_differences():
    p, m, k = 40, 25, 3
    scheme = AugmentationScheme(variant="sign_flip", r_flip=0.3)
    dims = ExperimentDims(p, m, k)
    beta = stream(0, 1).standard_normal(p)
    model = build_from_scheme(scheme, dims, beta)
    chi = ChiTerms(model, model.sigma_o, 0.05, m, k=k)
    state = EqsState(alpha=0.7, sigma1=0.5, sigma2=1.1, tau1=2.0, tau2=1.4,
                     nu1=0.8, nu2=0.6, r1=0.4, r2=1.3, theta=0.9)
    parts = chi.chi1_partials(state)
    h = 1e-6
    for name in ("sigma1", "sigma2", "tau1", "tau2", "r1", "r2", "theta"):
        up = chi.chi1_bar(state.replace(**{name: getattr(state, name) + h}))
        dn = chi.chi1_bar(state.replace(**{name: getattr(state, name) - h}))
        fd = (up - dn) / (2 * h)
        assert parts[name] == pytest.approx(fd, rel=2e-4, abs=1e-9), name


def test_snapshot_contains_all_terms():
    model = iso_model(20, 1.0)
    snap = chi_terms(model, model.sigma_o, s1t1=1.0, s2t2=2.0, lam=0.1, m=20.0)
    assert snap.kappa_bar_star == pytest.approx(1.0)
    assert snap.kappa_bar_o == pytest.approx(0.0, abs=1e-12)
    for name in ("chi11", "chi12", "chi13", "chi21", "chi22", "chi23",
                 "chi31", "chi32", "chi33"):
        assert np.isfinite(getattr(snap, name))
        assert getattr(snap, name) >= 0
    assert snap.norm_sigma_new_beta_star == pytest.approx(1.0)
