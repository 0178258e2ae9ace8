"""Labels, penalized weighted logistic regression, and risk evaluation.

The objective is

    R(beta) = (1/n) sum_i w_i (log(1 + exp(x_i' beta)) - y_i x_i' beta)
              + (lambda / 2n) ||beta||^2

minimized by gradient descent.  Backtracking (step halving on any risk
increase, with regrowth after accepted steps) is the default path; the fixed
learning-rate path is kept for studying raw training trajectories, which are
not universal across data laws even when the minima are.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class DivergedError(RuntimeError):
    """Training risk became non-finite (bad learning rate)."""


def log1pexp(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) as max(x, 0) + log1p(e^{-|x|}); overflow safe."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class LabelModel:
    """Row-stochastic block label dependence.

    kind "identity": each label uses its own row.  kind "da": every augmented
    row inherits the label of its original (one logistic noise draw per
    block).  kind "block_average": the linear predictor is the within-block
    mean, with independent noise per row.  An explicit block-supported
    row-stochastic matrix A can be given instead.
    """

    kind: str = "identity"
    a_matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "da", "block_average", "explicit"):
            raise ValueError(f"unknown label model kind {self.kind!r}")
        if self.kind == "explicit" and self.a_matrix is None:
            raise ValueError("explicit label model needs a_matrix")


def validate_a_matrix(a: np.ndarray, blocks: np.ndarray, tol: float = 1e-12) -> None:
    row_sums = a.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > tol:
        raise ValueError("label matrix rows must sum to 1")
    same = blocks[:, None] == blocks[None, :]
    if np.any(np.abs(a[~same]) > 0):
        raise ValueError("label matrix supported outside its blocks")


@dataclass(frozen=True)
class AugmentedData:
    """Design rows plus the block map; originals kept when labels need them."""

    x: np.ndarray
    blocks: np.ndarray
    z: np.ndarray | None = None


def generate_labels(data: AugmentedData, model: LabelModel, beta_star: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """y_i = 1{ s_i - eps_i > 0 } with s the model's linear predictor."""
    x, blocks = data.x, data.blocks
    n = x.shape[0]
    if model.kind == "identity":
        s = x @ beta_star
        eps = rng.logistic(0.0, 1.0, n)
        return (s - eps > 0).astype(np.int8)
    if model.kind == "da":
        if data.z is None:
            raise ValueError("da label model needs the original rows")
        s_orig = data.z @ beta_star
        eps = rng.logistic(0.0, 1.0, data.z.shape[0])
        y_orig = (s_orig - eps > 0).astype(np.int8)
        return y_orig[blocks]
    if model.kind == "block_average":
        s = x @ beta_star
        counts = np.bincount(blocks)
        means = np.bincount(blocks, weights=s) / counts
        eps = rng.logistic(0.0, 1.0, n)
        return (means[blocks] - eps > 0).astype(np.int8)
    validate_a_matrix(model.a_matrix, blocks)
    s = model.a_matrix @ (x @ beta_star)
    eps = rng.logistic(0.0, 1.0, n)
    return (s - eps > 0).astype(np.int8)


@dataclass(frozen=True)
class LogitConfig:
    lam: float = 0.01
    weights: np.ndarray | None = None
    learning_rate: float = 0.1
    max_iters: int = 1_000_000
    grad_tol: float = 1e-8
    backtracking: bool = True
    step_growth: float = 1.5
    trace_every: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.weights is not None:
            w = np.asarray(self.weights)
            if np.any(w < 0) or np.any(w > 1):
                raise ValueError("weights must lie in [0, 1]")


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    train_risk: float
    iters: int
    final_grad_norm: float
    converged: bool
    in_sp: bool
    sp_L: float
    sp_r: float
    risk_trace: np.ndarray | None = None

    def to_json(self) -> str:
        return json.dumps({
            "beta_hat": self.beta_hat.tolist(),
            "train_risk": self.train_risk,
            "iters": self.iters,
            "final_grad_norm": self.final_grad_norm,
            "converged": self.converged,
            "in_sp": self.in_sp, "sp_L": self.sp_L, "sp_r": self.sp_r,
        })


def _weights(config: LogitConfig, n: int) -> np.ndarray:
    if config.weights is None:
        return np.ones(n)
    w = np.asarray(config.weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("weights length must match row count")
    return w


def train_risk(beta: np.ndarray, x: np.ndarray, y: np.ndarray,
               config: LogitConfig) -> float:
    n = x.shape[0]
    w = _weights(config, n)
    margins = x @ beta
    loss = float(np.dot(w, log1pexp(margins) - y * margins)) / n
    return loss + 0.5 * config.lam * float(beta @ beta) / n


def train_risk_grad(beta: np.ndarray, x: np.ndarray, y: np.ndarray,
                    config: LogitConfig) -> np.ndarray:
    n = x.shape[0]
    w = _weights(config, n)
    margins = x @ beta
    return (x.T @ (w * (sigmoid(margins) - y)) + config.lam * beta) / n


def minimizer_norm_bound(lam: float, n: int) -> float:
    """Any risk minimizer satisfies ||beta|| <= sqrt(log 4 / lambda) sqrt(n)."""
    return math.sqrt(math.log(4.0) / lam) * math.sqrt(n)


def sp_membership(beta: np.ndarray, L: float, r: float) -> bool:
    """Inside the ball pair ||.||_2 <= L sqrt(p), ||.||_inf <= L p^((1-r)/2)."""
    if L <= 0 or not 0.0 < r < 0.125:
        raise ValueError("need L > 0 and r in (0, 1/8)")
    p = beta.shape[0]
    return (np.linalg.norm(beta) <= L * math.sqrt(p)
            and np.max(np.abs(beta), initial=0.0) <= L * p ** ((1.0 - r) / 2.0))


def fit_gd_batch(xs: np.ndarray, ys: np.ndarray, config: LogitConfig,
                 sp_L: float = 20.0, sp_r: float = 0.1) -> list[FitResult]:
    """Gradient descent on a batch of problems sharing one shape.

    xs has shape (T, n, p), ys shape (T, n).  Each problem carries its own
    adaptive step; convergence is per problem at grad_tol relative to the
    larger of 1 and the gradient norm at zero.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    T, n, p = xs.shape
    w = _weights(config, n)
    lam = config.lam

    def risks(betas, margins):
        loss = np.einsum("j,tj->t", w, log1pexp(margins) - ys * margins) / n
        return loss + 0.5 * lam * np.einsum("ti,ti->t", betas, betas) / n

    def grads(betas, margins):
        resid = w[None, :] * (sigmoid(margins) - ys)
        return (np.einsum("tnp,tn->tp", xs, resid) + lam * betas) / n

    betas = np.zeros((T, p))
    margins = np.zeros((T, n))
    risk = risks(betas, margins)
    grad = grads(betas, margins)
    gnorm0 = np.linalg.norm(grad, axis=1)
    tol = config.grad_tol * np.maximum(1.0, gnorm0)
    lr = np.full(T, config.learning_rate)
    active = np.ones(T, dtype=bool)
    iters = np.zeros(T, dtype=int)
    traces = [[] for _ in range(T)] if config.trace_every else None

    it = 0
    while it < config.max_iters and active.any():
        it += 1
        step = betas - lr[:, None] * grad
        new_margins = np.einsum("tnp,tp->tn", xs, step)
        new_risk = risks(step, new_margins)
        if config.backtracking:
            worse = active & (new_risk > risk)
            tries = 0
            while worse.any() and tries < 60:
                lr[worse] *= 0.5
                step[worse] = betas[worse] - lr[worse, None] * grad[worse]
                new_margins[worse] = np.einsum("tnp,tp->tn", xs[worse], step[worse])
                new_risk[worse] = risks(step, new_margins)[worse]
                worse = active & (new_risk > risk)
                tries += 1
            lr[active] *= config.step_growth
        elif not np.all(np.isfinite(new_risk[active])):
            raise DivergedError("training risk became non-finite")
        betas[active] = step[active]
        margins[active] = new_margins[active]
        risk[active] = new_risk[active]
        iters[active] = it
        grad[active] = grads(betas, margins)[active]
        gn = np.linalg.norm(grad, axis=1)
        if traces is not None and it % config.trace_every == 0:
            for t in range(T):
                if active[t]:
                    traces[t].append(risk[t])
        active &= gn > tol

    gn = np.linalg.norm(grad, axis=1)
    out = []
    for t in range(T):
        out.append(FitResult(
            beta_hat=betas[t].copy(), train_risk=float(risk[t]),
            iters=int(iters[t]), final_grad_norm=float(gn[t]),
            converged=bool(gn[t] <= tol[t]),
            in_sp=sp_membership(betas[t], sp_L, sp_r), sp_L=sp_L, sp_r=sp_r,
            risk_trace=np.asarray(traces[t]) if traces is not None else None))
    return out


def fit_gd(x: np.ndarray, y: np.ndarray, config: LogitConfig,
           sp_L: float = 20.0, sp_r: float = 0.1) -> FitResult:
    """Single-problem front end of `fit_gd_batch`; deterministic in (x, y, config)."""
    return fit_gd_batch(x[None], np.asarray(y, dtype=float)[None], config,
                        sp_L=sp_L, sp_r=sp_r)[0]


def _excess01(margin_hat: np.ndarray, margin_star: np.ndarray) -> np.ndarray:
    mismatch = (margin_hat > 0) != (margin_star > 0)
    return np.where(mismatch, np.abs(2.0 * sigmoid(margin_star) - 1.0), 0.0)


def _cross_entropy(margin_hat: np.ndarray, margin_star: np.ndarray) -> np.ndarray:
    return log1pexp(margin_hat) - sigmoid(margin_star) * margin_hat


def test_risk_mc(beta_hat: np.ndarray, beta_star: np.ndarray,
                 sigma_new: np.ndarray, n_test: int, loss: str,
                 rng: np.random.Generator,
                 sampler=None) -> tuple[float, float]:
    """Monte Carlo test risk with the label noise integrated out per draw.

    loss "excess-01" is the misclassification rate of beta_hat minus that of
    the oracle on the same draws; "cross-entropy" is the expected logistic
    loss of beta_hat.  Draws come from N(0, sigma_new) unless `sampler`
    supplies rows from the original data law.  Returns (estimate, standard
    error).
    """
    if sampler is not None:
        x_new = sampler(rng, n_test)
    else:
        vals, vecs = np.linalg.eigh(sigma_new)
        root = vecs * np.sqrt(np.maximum(vals, 0.0))
        x_new = rng.standard_normal((n_test, sigma_new.shape[0])) @ root.T
    a = x_new @ beta_hat
    b = x_new @ beta_star
    if loss == "excess-01":
        vals = _excess01(a, b)
    elif loss == "cross-entropy":
        vals = _cross_entropy(a, b)
    else:
        raise ValueError(f"unknown test loss {loss!r}")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_test))
