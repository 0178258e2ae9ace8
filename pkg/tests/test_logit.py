import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augrisk.augment import AugmentationScheme, augment_dataset
from augrisk.logit import (AugmentedData, DivergedError, LabelModel,
                           LogitConfig, fit_gd, generate_labels, log1pexp,
                           minimizer_norm_bound, sigmoid, sp_membership,
                           test_risk_mc, train_risk, train_risk_grad)
from augrisk.rngs import stream


def toy_problem(n=40, p=8, seed=0):
    rng = stream(seed, 0)
    x = rng.standard_normal((n, p)) / math.sqrt(p)
    beta = rng.standard_normal(p)
    y = (x @ beta - rng.logistic(0, 1, n) > 0).astype(float)
    return x, y, beta


def test_risk_at_zero_is_log2():
    x, y, _ = toy_problem()
    cfg = LogitConfig(lam=0.01)
    assert train_risk(np.zeros(x.shape[1]), x, y, cfg) == pytest.approx(
        math.log(2.0), abs=1e-15)


def test_label_form_identity():
    # 0/1-label loss equals the +-1-label form log(1+exp(-yt m)) exactly
    x, y, _ = toy_problem()
    rng = stream(1, 0)
    beta = rng.standard_normal(x.shape[1])
    m = x @ beta
    yt = 2.0 * y - 1.0
    lhs = log1pexp(m) - y * m
    rhs = log1pexp(-yt * m)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_gradient_matches_finite_differences():
    p = 20
    x, y, _ = toy_problem(n=50, p=p, seed=2)
    cfg = LogitConfig(lam=0.05)
    beta = stream(2, 1).standard_normal(p)
    g = train_risk_grad(beta, x, y, cfg)
    h = 1e-6
    fd = np.zeros(p)
    for j in range(p):
        e = np.zeros(p)
        e[j] = h
        fd[j] = (train_risk(beta + e, x, y, cfg)
                 - train_risk(beta - e, x, y, cfg)) / (2 * h)
    rel = np.abs(g - fd) / np.maximum(np.abs(g), 1e-8)
    assert rel.max() < 1e-6


def test_fit_beats_zero_on_separable_toy():
    x = np.array([[1.0, 0.0], [2.0, 0.1], [-1.0, 0.0], [-2.0, -0.1]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    fit = fit_gd(x, y, LogitConfig(lam=0.01, learning_rate=0.5))
    assert fit.train_risk < math.log(2.0)
    assert fit.converged


def test_norm_bound_never_violated():
    for seed in range(3):
        x, y, _ = toy_problem(n=30, p=10, seed=seed)
        cfg = LogitConfig(lam=0.01, learning_rate=1.0)
        fit = fit_gd(x, y, cfg)
        assert np.linalg.norm(fit.beta_hat) <= minimizer_norm_bound(0.01, 30)


def test_agreement_with_newton_oracle():
    p, n = 30, 120
    x, y, _ = toy_problem(n=n, p=p, seed=3)
    cfg = LogitConfig(lam=0.5, learning_rate=1.0, grad_tol=1e-12)
    fit = fit_gd(x, y, cfg)
    # independent damped Newton on the same objective
    beta = np.zeros(p)
    for _ in range(100):
        m = x @ beta
        w = sigmoid(m)
        g = (x.T @ (w - y) + cfg.lam * beta) / n
        hess = (x.T * (w * (1 - w))) @ x / n + cfg.lam / n * np.eye(p)
        step = np.linalg.solve(hess, g)
        beta = beta - step
        if np.linalg.norm(step) < 1e-14:
            break
    assert np.linalg.norm(fit.beta_hat - beta) < 1e-4


def test_fit_deterministic():
    x, y, _ = toy_problem(seed=4)
    cfg = LogitConfig(lam=0.1)
    f1 = fit_gd(x, y, cfg)
    f2 = fit_gd(x, y, cfg)
    assert np.array_equal(f1.beta_hat, f2.beta_hat)
    assert f1.iters == f2.iters


def test_divergence_without_backtracking():
    x, y, _ = toy_problem(seed=5)
    cfg = LogitConfig(lam=0.01, learning_rate=1e12, backtracking=False,
                      max_iters=50)
    with pytest.raises(DivergedError):
        fit_gd(x, y, cfg)


def test_labels_balanced_at_zero_signal():
    rng = stream(6, 0)
    x = rng.standard_normal((20000, 3))
    y = generate_labels(AugmentedData(x=x, blocks=np.arange(len(x)), z=None),
                        LabelModel(kind="identity"), np.zeros(3), stream(6, 1))
    assert abs(y.mean() - 0.5) < 3 * 0.5 / math.sqrt(len(y))


def test_labels_balanced_gaussian_any_signal():
    rng = stream(6, 2)
    x = rng.standard_normal((20000, 4))
    beta = np.array([3.0, -1.0, 0.5, 2.0])
    y = generate_labels(AugmentedData(x=x, blocks=np.arange(len(x)), z=None),
                        LabelModel(kind="identity"), beta, stream(6, 3))
    assert abs(y.mean() - 0.5) < 3 * 0.5 / math.sqrt(len(y))


def test_da_labels_identical_within_block():
    rng = stream(7, 0)
    z = rng.standard_normal((50, 6))
    x, blocks = augment_dataset(z, AugmentationScheme(variant="sign_flip",
                                                      r_flip=1.0), 4, stream(7, 1))
    y = generate_labels(AugmentedData(x=x, blocks=blocks, z=z),
                        LabelModel(kind="da"), np.ones(6), stream(7, 2))
    assert np.all(y.reshape(50, 4).std(axis=1) == 0)


def test_explicit_a_matrix_recovers_identity_model():
    rng = stream(7, 3)
    x = rng.standard_normal((10, 3))
    a = np.eye(10)
    y1 = generate_labels(AugmentedData(x=x, blocks=np.arange(10), z=None),
                         LabelModel(kind="explicit", a_matrix=a),
                         np.ones(3), stream(7, 4))
    y2 = generate_labels(AugmentedData(x=x, blocks=np.arange(10), z=None),
                         LabelModel(kind="identity"), np.ones(3), stream(7, 4))
    assert np.array_equal(y1, y2)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.01, 0.99), seed=st.integers(0, 100))
def test_objective_convexity(t, seed):
    x, y, _ = toy_problem(seed=8)
    cfg = LogitConfig(lam=0.3)
    rng = stream(9, seed)
    b1 = rng.standard_normal(x.shape[1])
    b2 = rng.standard_normal(x.shape[1])
    lhs = train_risk(t * b1 + (1 - t) * b2, x, y, cfg)
    rhs = t * train_risk(b1, x, y, cfg) + (1 - t) * train_risk(b2, x, y, cfg)
    assert lhs <= rhs + 1e-12


def test_test_risk_oracle_is_zero():
    p = 6
    beta = stream(10, 0).standard_normal(p)
    val, se = test_risk_mc(beta, beta, np.eye(p) / p, 5000, "excess-01",
                           stream(10, 1))
    assert val == 0.0


def test_test_risk_sign_flip_estimator():
    p = 6
    rng = stream(10, 2)
    beta = rng.standard_normal(p)
    sigma = np.eye(p) / p
    # brute force on the same draws
    rng_draws = stream(10, 3)
    val, _ = test_risk_mc(-beta, beta, sigma, 20000, "excess-01", stream(10, 3))
    x = rng_draws.standard_normal((20000, p)) @ (np.eye(p) / math.sqrt(p))
    b = x @ beta
    brute = np.mean(np.abs(2 * sigmoid(b) - 1.0))  # always mismatched
    assert val == pytest.approx(brute, rel=1e-12)


def test_test_risk_orthogonal_estimator_limit():
    # orthogonal estimate: mismatch probability 1/2 independent of margin, so
    # the excess approaches (1/2) E|2 sigma(b) - 1| = 1/2 - oracle risk
    p = 2
    beta_star = np.array([1.0, 0.0]) * 5.0
    beta_hat = np.array([0.0, 1.0])
    sigma = np.eye(p)
    val, se = test_risk_mc(beta_hat, beta_star, sigma, 400000, "excess-01",
                           stream(10, 4))
    nodes, w = np.polynomial.hermite_e.hermegauss(96)
    w = w / math.sqrt(2 * math.pi)
    half_e = 0.5 * float(w @ np.abs(2 * sigmoid(5.0 * nodes) - 1.0))
    assert val == pytest.approx(half_e, abs=4 * se)


def test_sp_membership():
    assert sp_membership(np.zeros(10), 20.0, 0.1)
    p = 100
    beta = np.zeros(p)
    beta[0] = 20.0 * math.sqrt(p)
    assert not sp_membership(beta, 20.0, 0.1)
    with pytest.raises(ValueError):
        sp_membership(np.zeros(3), 1.0, 0.5)


def test_weighted_risk_uses_weights():
    x, y, _ = toy_problem(n=10, p=3, seed=11)
    w = np.zeros(10)
    w[0] = 1.0
    cfg = LogitConfig(lam=0.0, weights=w)
    beta = np.ones(3)
    m0 = float(x[0] @ beta)
    expect = (log1pexp(np.array([m0]))[0] - y[0] * m0) / 10
    assert train_risk(beta, x, y, cfg) == pytest.approx(expect)
