import numpy as np
import pytest

from augrisk.augment import AugmentationScheme
from augrisk.covmodel import ExperimentDims, build_from_scheme
from augrisk.eqs import (ChiTerms, EqsState, MCPool, isotropic_warm_start,
                         residuals, solve, solve_multistart, test_risk_bar)
from augrisk.eqs.solve import NoConvergenceError
from augrisk.iso_oracle import (IsoSolution, iso_residuals_full,
                                isotropic_oracle_solve)
from augrisk.rngs import stream


def iso_chi(kappa, lam, p=80):
    dims = ExperimentDims(p, max(1, int(round(p / kappa))), 1)
    model = build_from_scheme(AugmentationScheme(variant="none"), dims, np.ones(p))
    return ChiTerms(model, model.sigma_o, lam, p / kappa, k=1)


def test_solve_recovers_isotropic_root_from_perturbed_start():
    kappa, lam = 1.0, 0.1
    chi = iso_chi(kappa, lam)
    iso = isotropic_oracle_solve(kappa, lam)
    ws = isotropic_warm_start(1.4 * iso.alpha, 0.7 * iso.sigma2, 1.5 * iso.tau2,
                              0.8 * iso.nu2, 1.3 * iso.r2, 0.6 * iso.theta)
    pool = MCPool.quadrature(k=1, n_nodes=100)
    sol = solve(ws, pool, chi, 1, tol=1e-8)
    assert sol.converged
    assert sol.boundary_hit
    assert sol.state.alpha == pytest.approx(iso.alpha, rel=1e-5)
    assert sol.state.sigma2 == pytest.approx(iso.sigma2, rel=1e-5)
    assert sol.state.gamma == pytest.approx(iso.gamma, rel=1e-5)
    # the solution satisfies the independently implemented reduced system
    cand = IsoSolution(alpha=sol.state.alpha, sigma2=sol.state.sigma2,
                       tau2=sol.state.tau2, r2=sol.state.r2,
                       gamma=sol.state.gamma, theta=sol.state.theta,
                       residual_norm=0.0)
    assert np.abs(iso_residuals_full(cand, kappa, lam)).max() < 1e-5


def test_solve_with_infinite_tol_returns_init():
    chi = iso_chi(1.0, 0.1)
    init = isotropic_warm_start(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    pool = MCPool.quadrature(k=1, n_nodes=40)
    sol = solve(init, pool, chi, 1, tol=float("inf"))
    assert sol.state.alpha == 1.0 and sol.state.sigma2 == 1.0
    assert sol.converged


def test_resolve_from_solution_is_immediate():
    kappa, lam = 1.5, 0.05
    chi = iso_chi(kappa, lam)
    iso = isotropic_oracle_solve(kappa, lam)
    ws = isotropic_warm_start(iso.alpha, iso.sigma2, iso.tau2, iso.nu2,
                              iso.r2, iso.theta)
    pool = MCPool.quadrature(k=1, n_nodes=100)
    sol = solve(ws, pool, chi, 1, tol=1e-6)
    again = solve(sol.state, pool, chi, 1, tol=1e-6)
    assert len(again.solver_trace) == 0  # converged at entry, zero iterations


def test_no_convergence_carries_best_iterate():
    chi = iso_chi(1.0, 0.1)
    bad = isotropic_warm_start(50.0, 90.0, 0.01, 0.01, 80.0, -30.0)
    pool = MCPool.quadrature(k=1, n_nodes=30)
    with pytest.raises(NoConvergenceError) as err:
        solve(bad, pool, chi, 1, tol=1e-12, max_iters=2)
    assert err.value.best.residual_norm == err.value.norm


def test_multistart_reports_roots():
    kappa, lam = 1.0, 0.1
    chi = iso_chi(kappa, lam)
    iso = isotropic_oracle_solve(kappa, lam)
    pool = MCPool.quadrature(k=1, n_nodes=60)
    inits = [isotropic_warm_start(iso.alpha * f, iso.sigma2, iso.tau2,
                                  iso.nu2, iso.r2, iso.theta)
             for f in (1.0, 1.2)]
    sol = solve_multistart(inits, pool, chi, 1, tol=1e-7, max_iters=40)
    assert len(sol.extras["roots"]) == 2
    assert sol.residual_norm <= 1e-7


def test_test_risk_bar_examples():
    # squared loss with matched variance vanishes
    assert test_risk_bar(4.0, 2.0, loss="squared") == pytest.approx(0.0, abs=1e-12)
    # chi2 = 0: the first argument is identically zero, so the expected
    # logistic loss collapses to log 2 (independent of the quadrature)
    import math
    val = test_risk_bar(0.0, 1.5, loss="cross-entropy", n_gh=80)
    assert val == pytest.approx(math.log(2.0), abs=1e-10)
    # Gauss-Hermite vs Monte Carlo on the smoothed mismatch loss
    gh = test_risk_bar(0.7, 1.2, loss="excess-01-smoothed", n_gh=96)
    mc = test_risk_bar(0.7, 1.2, loss="excess-01-smoothed", n_mc=400000,
                       rng=stream(1, 2))
    assert gh == pytest.approx(mc, abs=3 * 0.5 / np.sqrt(400000) * 3)
    # shared-noise excess mismatch is identically zero for positive chi2
    assert test_risk_bar(0.5, 1.0, loss="excess-01") == 0.0


def test_iso_oracle_identities_and_limits():
    sol = isotropic_oracle_solve(1.0, 0.1)
    assert sol.theta == pytest.approx(sol.alpha * 1.0 / sol.gamma, rel=1e-12)
    assert sol.r2 == pytest.approx(sol.sigma2 * 1.0 / sol.gamma, rel=1e-12)
    # heavy regularization kills the fit
    big = isotropic_oracle_solve(1.0, 60.0)
    assert big.alpha < 0.02 and big.sigma2 < 0.1
    # per-dimension ridge convention: lambda' = lambda * kappa
    kappa = 2.0
    a = isotropic_oracle_solve(kappa, 0.08, lambda_convention="per-n")
    b = isotropic_oracle_solve(kappa, 0.08 / kappa, lambda_convention="per-p")
    assert a.alpha == pytest.approx(b.alpha, rel=1e-9)
    assert a.sigma2 == pytest.approx(b.sigma2, rel=1e-9)
