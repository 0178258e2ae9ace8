import numpy as np
import pytest

from augrisk.augment import AugmentationScheme, GroupStructure
from augrisk.covmodel import ExperimentDims, build_from_scheme
from augrisk.eqs import (ChiTerms, EqsState, MCPool, do_value,
                         isotropic_warm_start, moreau_value, residuals)
from augrisk.eqs.state import VAR_NAMES
from augrisk.iso_oracle import isotropic_oracle_solve
from augrisk.rngs import stream


def flip_setup(p=30, m=20, k=3, lam=0.05, r_flip=0.3):
    dims = ExperimentDims(p, m, k)
    scheme = AugmentationScheme(variant="sign_flip", r_flip=r_flip)
    beta = np.zeros(p)
    beta[p // 2:] = stream(3, 1).standard_normal(p - p // 2)
    model = build_from_scheme(scheme, dims, beta)
    chi = ChiTerms(model, model.sigma_o, lam, m, k=k)
    return chi


def interior_state():
    return EqsState(alpha=0.8, sigma1=0.5, sigma2=1.3, tau1=2.2, tau2=2.9,
                    nu1=1.1, nu2=0.8, r1=0.35, r2=0.95, theta=0.6)


def test_residuals_pure_and_bit_identical():
    chi = flip_setup()
    pool = MCPool.monte_carlo(3000, 3, stream(4, 0))
    st = interior_state()
    r1 = residuals(st, pool, chi, 3)
    r2 = residuals(st, pool, chi, 3)
    assert np.array_equal(r1, r2)


def test_residuals_are_gradient_of_do_value():
    # the strongest internal consistency check: the residual vector is the
    # exact gradient of the pooled objective on the same fixed pool
    chi = flip_setup()
    k = 3
    pool = MCPool.monte_carlo(1500, k, stream(5, 0))
    st = interior_state()
    r = residuals(st, pool, chi, k)
    for i, name in enumerate(VAR_NAMES):
        h = 1e-5 * max(1.0, abs(getattr(st, name)))
        up = do_value(st.replace(**{name: getattr(st, name) + h}), pool, chi, k)
        dn = do_value(st.replace(**{name: getattr(st, name) - h}), pool, chi, k)
        fd = (up - dn) / (2 * h)
        assert r[i] == pytest.approx(fd, rel=3e-4, abs=5e-7), name


def test_envelope_derivatives_match_moreau_finite_differences():
    # acceptance property: d/dparam of the pooled proximal-minimum value
    # matches the analytic envelope expressions used inside residuals
    chi = flip_setup()
    k = 3
    pool = MCPool.monte_carlo(1200, k, stream(6, 0))
    st = interior_state()
    r = residuals(st, pool, chi, k)
    parts = chi.chi1_partials(st)

    envelope = {
        # residual component minus every non-Moreau term isolates dM/dparam
        "alpha": r[0] - (st.theta * chi.kappa_bar_star**2
                         - st.alpha * chi.kappa_bar_star**2
                         / (st.sigma2 * st.tau2)) + _e_y_z1(pool, chi) * chi.kappa_bar_star,
        "sigma1": r[1] + 0.5 / st.tau1 + parts["sigma1"],
        "sigma2": r[2] + 0.5 / st.tau2
        - st.alpha**2 * chi.kappa_bar_star**2 / (2 * st.sigma2**2 * st.tau2)
        + parts["sigma2"],
        "nu1": r[5] + st.r1 / (2 * st.nu1**2),
        "nu2": r[6] + st.r2 / (2 * st.nu2**2)
        - _e_ybar(pool, chi) / (2 * st.r2 * st.nu2**2),
        "r1": r[7] - 0.5 / st.nu1 + parts["r1"],
        "r2": r[8] - 0.5 / st.nu2 - _e_ybar(pool, chi) / (2 * st.r2**2 * st.nu2)
        + parts["r2"],
    }
    for name, analytic in envelope.items():
        h = 1e-4 * max(1.0, abs(getattr(st, name)))
        up = moreau_value(st.replace(**{name: getattr(st, name) + h}), pool, chi)
        dn = moreau_value(st.replace(**{name: getattr(st, name) - h}), pool, chi)
        fd = (up - dn) / (2 * h)
        denom = max(abs(fd), 1e-6)
        assert abs(analytic - fd) / denom < 1e-4, name


def _e_ybar(pool, chi):
    ybar, w = pool.labels_and_weights(chi.kappa_bar_o, chi.kappa_bar_star)
    return float(w @ ybar)


def _e_y_z1(pool, chi):
    ybar, w = pool.labels_and_weights(chi.kappa_bar_o, chi.kappa_bar_star)
    return float(w @ (ybar * pool.z1))


def test_residuals_shrink_with_pool_size():
    chi = flip_setup()
    k = 3
    st = interior_state()
    pools = [MCPool.monte_carlo(n, k, stream(7, i))
             for i, n in enumerate((2000, 2000, 8000, 8000))]
    r_small = [residuals(st, p, chi, k) for p in pools[:2]]
    r_large = [residuals(st, p, chi, k) for p in pools[2:]]
    d_small = np.linalg.norm(r_small[0] - r_small[1])
    d_large = np.linalg.norm(r_large[0] - r_large[1])
    assert d_large < d_small  # expect roughly half at 4x the pool


def test_isotropic_point_zeroes_active_residuals():
    kappa, lam, p = 1.0, 0.1, 80
    dims = ExperimentDims(p, p, 1)
    model = build_from_scheme(AugmentationScheme(variant="none"), dims, np.ones(p))
    chi = ChiTerms(model, model.sigma_o, lam, p / kappa, k=1)
    iso = isotropic_oracle_solve(kappa, lam)
    ws = isotropic_warm_start(iso.alpha, iso.sigma2, iso.tau2, iso.nu2,
                              iso.r2, iso.theta)
    pool = MCPool.quadrature(k=1, n_nodes=100)
    r = residuals(ws, pool, chi, 1)
    assert np.abs(r[[0, 2, 4, 6, 8, 9]]).max() < 1e-3
    # boundary stationarity residuals are the capped 1/(2 large) values
    assert np.abs(r[[1, 3, 5, 7]]).max() <= 5.001e-07


def test_k_copies_reduction_matches_rescaled_unaugmented_system():
    # k identical copies of each row is the unaugmented problem at aspect
    # p/m with ridge weight lambda/k; the residual map must vanish at that
    # independently computed point (pins the lambda/n resolvent convention)
    p, m, k, lam = 90, 60, 3, 0.06
    dims = ExperimentDims(p, m, k)
    model = build_from_scheme(AugmentationScheme(variant="none"), dims, np.ones(p))
    chi = ChiTerms(model, model.sigma_o, lam, m, k=k)
    iso = isotropic_oracle_solve(p / m, lam / k)
    ws = isotropic_warm_start(iso.alpha, iso.sigma2, iso.tau2, iso.nu2,
                              iso.r2, iso.theta)
    pool = MCPool.quadrature(k=k, n_nodes=100)
    r = residuals(ws, pool, chi, k)
    assert np.abs(r[[0, 2, 4, 6, 8, 9]]).max() < 1e-3
