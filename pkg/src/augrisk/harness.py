"""Experiment orchestration: universality sweeps, dependence experiments, and
concentration probes.

Every cell (one scheme/distribution/sweep-point combination) runs `trials`
independent fits.  The Gaussian arm of a cell samples jointly normal blocks
matched to the trial's exact second moments, shares the trial's signal,
group scales and label noise with the non-Gaussian arm, and is the
universality comparison target.  All randomness is keyed by
(seed, trial, role), so reports are pure functions of the spec and seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as spstats

from . import rngs
from .augment import (AugmentationScheme, CoordinateDistribution,
                      GroupStructure, SignalSpec, augment_dataset,
                      make_beta_star, sample_original)
from .covmodel import ExperimentDims, build_from_scheme
from .logit import (AugmentedData, FitResult, LabelModel, LogitConfig,
                    fit_gd_batch, generate_labels, test_risk_mc)
from .surrogate import sample_surrogate_fast

GAUSSIAN_ARM = "gaussian-surrogate"


@dataclass(frozen=True)
class DependenceSpec:
    """Row dependence for the non-block experiments.

    ar1 builds rows by the stationary recursion X_i = phi X_{i-1} +
    sqrt(1 - phi^2) xi_i, so each row keeps the innovation covariance
    exactly; m-dependent uses the moving-average window of width m_dep + 1.
    """

    kind: str = "ar1"
    phi: float = 0.0
    m_dep: int = 1
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("block", "m-dependent", "ar1"):
            raise ValueError(f"unknown dependence kind {self.kind!r}")
        if self.kind == "ar1" and not abs(self.phi) < 1.0:
            raise ValueError("ar1 coefficient must satisfy |phi| < 1")
        if self.m_dep < 1 or self.k < 1:
            raise ValueError("m_dep and k must be >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    dims: ExperimentDims
    distributions: tuple[str, ...]
    scheme: AugmentationScheme
    signal: SignalSpec
    logit: LogitConfig
    trials: int
    seed: int
    groups: GroupStructure | None = None
    scale_gamma: tuple[float, float] | None = None  # random per-trial group scales
    n_test: int = 10_000
    test_loss: str = "excess-01"
    include_gaussian_arm: bool = True
    batch_chunk: int = 25

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("trials must be >= 2")


@dataclass
class CellStats:
    scheme_label: str
    dist: str
    sweep_name: str
    sweep_value: float
    trials_ok: int
    trials_failed: int
    train_risk_mean: float
    train_risk_se: float
    test_risk_mean: float
    test_risk_se: float
    quad_mean: float
    quad_var: float
    ks_vs_gauss: float
    sp_failures: int
    train_risks: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "train_risks"}


@dataclass
class SweepReport:
    spec_digest: str
    seed: int
    cells: list[CellStats]

    def to_json(self) -> str:
        return json.dumps({"spec_digest": self.spec_digest, "seed": self.seed,
                           "cells": [c.row() for c in self.cells]})

    def to_csv(self, path) -> None:
        rows = [c.row() for c in self.cells]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)

    def plot_data(self, metric: str = "test_risk"):
        """(x, y, yerr) triples per (scheme, dist) curve, ready for plotting."""
        out = {}
        for c in self.cells:
            key = (c.scheme_label, c.dist)
            out.setdefault(key, []).append(
                (c.sweep_value, getattr(c, f"{metric}_mean"),
                 getattr(c, f"{metric}_se")))
        return {k: sorted(v) for k, v in out.items()}

    def cell(self, scheme_label: str, dist: str, sweep_value) -> CellStats:
        for c in self.cells:
            if (c.scheme_label == scheme_label and c.dist == dist
                    and c.sweep_value == sweep_value):
                return c
        raise KeyError((scheme_label, dist, sweep_value))


def _spec_digest(payload: str) -> str:
    import hashlib
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _trial_groups(spec: ExperimentSpec, trial: int, p: int) -> GroupStructure:
    groups = spec.groups or GroupStructure.single(p)
    if groups.p != p:
        raise ValueError("grouped specs cannot sweep over p")
    if spec.scale_gamma is None:
        return groups
    shape, scl = spec.scale_gamma
    rng = rngs.stream(spec.seed, trial, rngs.ROLE_SCALES)
    return groups.with_scales(rng.gamma(shape, scl, groups.n_groups))


def _trial_signal(spec: ExperimentSpec, trial: int, groups: GroupStructure,
                  p: int) -> np.ndarray:
    rng = rngs.stream(spec.seed, trial, rngs.ROLE_SIGNAL)
    return make_beta_star(spec.signal, groups, p, rng)


def _measure(fit: FitResult, beta_star: np.ndarray, sigma_new: np.ndarray,
             spec: ExperimentSpec, trial: int, sampler=None) -> dict:
    rng = rngs.stream(spec.seed, trial, rngs.ROLE_TEST)
    test, _ = test_risk_mc(fit.beta_hat, beta_star, sigma_new, spec.n_test,
                           spec.test_loss, rng, sampler=sampler)
    quad = float(fit.beta_hat @ sigma_new @ fit.beta_hat)
    return {"train": fit.train_risk, "test": test, "quad": quad,
            "in_sp": fit.in_sp, "ok": np.isfinite(fit.train_risk)}


def _cell_from_measurements(ms: list[dict], label: str, dist: str,
                            sweep_name: str, sweep_value,
                            gauss_train: np.ndarray | None) -> CellStats:
    ok = [m for m in ms if m["ok"]]
    train = np.array([m["train"] for m in ok])
    test = np.array([m["test"] for m in ok])
    quad = np.array([m["quad"] for m in ok])
    n = len(ok)
    ks = float("nan")
    if gauss_train is not None and n > 1:
        ks = float(spstats.ks_2samp(train, gauss_train).statistic)
    return CellStats(
        scheme_label=label, dist=dist, sweep_name=sweep_name,
        sweep_value=sweep_value, trials_ok=n, trials_failed=len(ms) - n,
        train_risk_mean=float(train.mean()),
        train_risk_se=float(train.std(ddof=1) / math.sqrt(n)),
        test_risk_mean=float(test.mean()),
        test_risk_se=float(test.std(ddof=1) / math.sqrt(n)),
        quad_mean=float(quad.mean()), quad_var=float(quad.var(ddof=1)),
        ks_vs_gauss=ks, sp_failures=sum(not m["in_sp"] for m in ok),
        train_risks=train)


def _run_cell(spec: ExperimentSpec, dims: ExperimentDims, dist_kind: str,
              scheme: AugmentationScheme) -> list[dict]:
    """All trials of one (distribution | gaussian arm, scheme, dims) cell."""
    out = []
    chunk = spec.batch_chunk
    for lo in range(0, spec.trials, chunk):
        hi = min(lo + chunk, spec.trials)
        xs, ys, betas, signews, samplers = [], [], [], [], []
        for trial in range(lo, hi):
            groups = _trial_groups(spec, trial, dims.p)
            beta_star = _trial_signal(spec, trial, groups, dims.p)
            label_rng = rngs.stream(spec.seed, trial, rngs.ROLE_LABELS)
            model = build_from_scheme(scheme, dims, beta_star, groups=groups)
            if dist_kind == GAUSSIAN_ARM:
                data_rng = rngs.stream(spec.seed, trial, rngs.ROLE_SURROGATE)
                z, x = sample_surrogate_fast(model, dims.k, dims.m, data_rng)
                blocks = np.repeat(np.arange(dims.m), dims.k)
                sampler = None  # test draws from N(0, sigma_o)
            else:
                dist = CoordinateDistribution(dist_kind)
                data_rng = rngs.stream(spec.seed, trial, rngs.ROLE_DATA)
                aug_rng = rngs.stream(spec.seed, trial, rngs.ROLE_AUGMENT)
                z = sample_original(dist, groups, dims.m, dims.p, data_rng)
                x, blocks = augment_dataset(z, scheme, dims.k, aug_rng)

                def sampler(rng, n_draws, _groups=groups, _dist=dist):
                    return sample_original(_dist, _groups, n_draws, dims.p, rng)
            y = generate_labels(AugmentedData(x=x, blocks=blocks, z=z),
                                LabelModel(kind="da"), beta_star, label_rng)
            xs.append(x)
            ys.append(y)
            betas.append(beta_star)
            signews.append(model.sigma_o)
            samplers.append(sampler)
        fits = fit_gd_batch(np.stack(xs), np.stack(ys).astype(float), spec.logit,
                            sp_L=spec.signal.L, sp_r=spec.signal.r)
        for j, trial in enumerate(range(lo, hi)):
            out.append(_measure(fits[j], betas[j], signews[j], spec, trial,
                                sampler=samplers[j]))
    return out


def run_universality_sweep(spec: ExperimentSpec, sweep: dict) -> SweepReport:
    """Sweep over k or p; one cell per (sweep point, scheme, arm).

    sweep maps one of {"k", "p"} to a grid, optionally plus "schemes": a list
    of (label, scheme) or (label, scheme, k_override) entries to compare side
    by side (default [("scheme", spec.scheme)]).  A scheme entry may be a
    callable taking the current p, for schemes whose index sets depend on the
    sweep point; k_override pins that arm's augmentation count (the
    no-augmentation reference in a k-sweep, for example).
    """
    sweep_name = "k" if "k" in sweep else "p"
    grid = sweep[sweep_name]
    schemes = sweep.get("schemes", [("scheme", spec.scheme)])
    arms = list(spec.distributions)
    if spec.include_gaussian_arm:
        arms.append(GAUSSIAN_ARM)

    cells = []
    for value in grid:
        p = spec.dims.p if sweep_name == "k" else int(value)
        base_k = int(value) if sweep_name == "k" else spec.dims.k
        for entry in schemes:
            label, scheme = entry[0], entry[1]
            k_use = entry[2] if len(entry) > 2 and entry[2] else base_k
            if callable(scheme):
                scheme = scheme(p)
            dims = ExperimentDims(p, spec.dims.m, int(k_use))
            arm_results = {arm: _run_cell(spec, dims, arm, scheme)
                           for arm in arms}
            gauss_train = None
            if GAUSSIAN_ARM in arm_results:
                ok = [m for m in arm_results[GAUSSIAN_ARM] if m["ok"]]
                gauss_train = np.array([m["train"] for m in ok])
            for arm in arms:
                ref = None if arm == GAUSSIAN_ARM else gauss_train
                cells.append(_cell_from_measurements(
                    arm_results[arm], label, arm, sweep_name, value, ref))
    digest = _spec_digest(json.dumps({
        "sweep": {sweep_name: list(map(float, grid))},
        "schemes": [e[0] for e in schemes],
        "dims": [spec.dims.p, spec.dims.m, spec.dims.k],
        "trials": spec.trials}))
    return SweepReport(spec_digest=digest, seed=spec.seed, cells=cells)


# -- row-dependent (non-block) experiments --------------------------------


def _dependent_rows(dist: CoordinateDistribution, dep: DependenceSpec,
                    n: int, p: int, rng: np.random.Generator,
                    gaussian: bool) -> np.ndarray:
    kind = CoordinateDistribution("gaussian") if gaussian else dist
    if dep.kind == "ar1":
        innov = kind.draw(rng, (n, p), p)
        x = np.empty((n, p))
        x[0] = innov[0]
        c = math.sqrt(1.0 - dep.phi**2)
        for i in range(1, n):
            x[i] = dep.phi * x[i - 1] + c * innov[i]
        return x
    if dep.kind == "m-dependent":
        w = dep.m_dep + 1
        innov = kind.draw(rng, (n + w - 1, p), p)
        x = np.zeros((n, p))
        for l in range(w):
            x += innov[l:l + n]
        return x / math.sqrt(w)
    raise ValueError("block dependence runs through run_universality_sweep")


def run_dependence_experiment(spec: ExperimentSpec, dep: DependenceSpec) -> SweepReport:
    """Non-Gaussian rows with the requested dependence vs the matched
    Gaussian process (identical cross-row covariance), labels per row."""
    dims = spec.dims
    n, p = dims.n, dims.p
    label = f"{dep.kind}"
    cells = []
    arm_results = {}
    for arm in (*spec.distributions, GAUSSIAN_ARM):
        ms = []
        for lo in range(0, spec.trials, spec.batch_chunk):
            hi = min(lo + spec.batch_chunk, spec.trials)
            xs, ys, betas = [], [], []
            for trial in range(lo, hi):
                groups = _trial_groups(spec, trial, p)
                beta_star = _trial_signal(spec, trial, groups, p)
                data_rng = rngs.stream(spec.seed, trial, rngs.ROLE_DATA)
                dist = CoordinateDistribution(
                    arm if arm != GAUSSIAN_ARM else spec.distributions[0])
                x = _dependent_rows(dist, dep, n, p, data_rng,
                                    gaussian=arm == GAUSSIAN_ARM)
                label_rng = rngs.stream(spec.seed, trial, rngs.ROLE_LABELS)
                y = generate_labels(
                    AugmentedData(x=x, blocks=np.arange(n), z=None),
                    LabelModel(kind="identity"), beta_star, label_rng)
                xs.append(x)
                ys.append(y)
                betas.append(beta_star)
            fits = fit_gd_batch(np.stack(xs), np.stack(ys).astype(float),
                                spec.logit, sp_L=spec.signal.L, sp_r=spec.signal.r)
            for j, trial in enumerate(range(lo, hi)):
                sigma_new = np.eye(p) / p
                ms.append(_measure(fits[j], betas[j], sigma_new, spec, trial))
        arm_results[arm] = ms
    ok = [m for m in arm_results[GAUSSIAN_ARM] if m["ok"]]
    gauss_train = np.array([m["train"] for m in ok])
    for arm, ms in arm_results.items():
        ref = None if arm == GAUSSIAN_ARM else gauss_train
        cells.append(_cell_from_measurements(
            ms, label, arm, "phi" if dep.kind == "ar1" else "m_dep",
            dep.phi if dep.kind == "ar1" else dep.m_dep, ref))
    digest = _spec_digest(json.dumps({"dep": dep.kind, "phi": dep.phi,
                                      "m_dep": dep.m_dep,
                                      "dims": [p, dims.m, dims.k]}))
    return SweepReport(spec_digest=digest, seed=spec.seed, cells=cells)


def concentration_probe(spec: ExperimentSpec, p_grid) -> SweepReport:
    """Trial variance of the test-metric quadratic form along a fixed-aspect
    sequence of dimensions."""
    aspect = spec.dims.p / spec.dims.m
    cells = []
    for p in p_grid:
        m = max(2, int(round(p / aspect)))
        sub = replace(spec, dims=ExperimentDims(int(p), m, spec.dims.k),
                      groups=None)
        report = run_universality_sweep(sub, {"k": [spec.dims.k]})
        for c in report.cells:
            c.sweep_name = "p"
            c.sweep_value = int(p)
            cells.append(c)
    return SweepReport(spec_digest=_spec_digest(json.dumps(list(map(int, p_grid)))),
                       seed=spec.seed, cells=cells)


# -- presets ---------------------------------------------------------------


def preset(name: str, seed: int = 0, trials: int | None = None):
    """Named experiment configurations at desk and full scale.

    Returns (spec, sweep) ready for run_universality_sweep, or (spec, dep)
    for the dependence presets.
    """
    if name == "fig1-desk":
        p, m = 200, 80
        groups = GroupStructure.even(p, 40)
        spec = ExperimentSpec(
            dims=ExperimentDims(p, m, 1),
            distributions=("uniform", "gamma-2", "exponential", "t-3"),
            scheme=AugmentationScheme(variant="permutation", r_perm=1.0,
                                      groups=groups),
            signal=SignalSpec(pattern="group-constant"),
            logit=LogitConfig(lam=0.01, learning_rate=0.1, grad_tol=1e-6),
            trials=trials or 100, seed=seed, groups=groups,
            scale_gamma=(0.5, 1.0))
        sweep = {"k": [1, 5, 11],
                 "schemes": [("perm-1.0",
                              AugmentationScheme(variant="permutation",
                                                 r_perm=1.0, groups=groups))]}
        return spec, sweep
    if name == "fig1-desk-partial":
        spec, sweep = preset("fig1-desk", seed=seed, trials=trials)
        groups = spec.groups
        sweep = {"k": [11],
                 "schemes": [("perm-0.8",
                              AugmentationScheme(variant="permutation",
                                                 r_perm=0.8, groups=groups))]}
        return spec, sweep
    if name == "fig1-paper":
        p, m = 500, 200
        groups = GroupStructure.even(p, 50)
        spec = ExperimentSpec(
            dims=ExperimentDims(p, m, 1),
            distributions=("uniform", "gamma-2", "exponential", "t-3"),
            scheme=AugmentationScheme(variant="permutation", r_perm=1.0,
                                      groups=groups),
            signal=SignalSpec(pattern="group-constant"),
            logit=LogitConfig(lam=0.01, learning_rate=0.1),
            trials=trials or 50, seed=seed, groups=groups,
            scale_gamma=(0.5, 1.0))
        return spec, {"k": list(range(1, 22, 2)),
                      "schemes": [("perm-1.0", spec.scheme)]}
    if name in ("fig2-desk-left", "fig2-desk-right"):
        m, k = 80, 30
        informed = name.endswith("right")
        signal = SignalSpec(pattern="sparse", rho_star=0.2,
                            s0=1.0 if informed else 0.0)
        spec = ExperimentSpec(
            dims=ExperimentDims(100, m, k),
            distributions=("gaussian",),
            scheme=AugmentationScheme(variant="none"),
            signal=signal,
            logit=LogitConfig(lam=0.01, learning_rate=0.1, grad_tol=1e-6),
            trials=trials or 100, seed=seed,
            include_gaussian_arm=False)
        schemes = [(lbl, sch, 1 if lbl == "none" else None)
                   for lbl, sch in [("crop", lambda p, s=signal, inf=informed:
                                     fig2_schemes(p, s, inf)[0][1]),
                                    ("sign-flip", lambda p, s=signal, inf=informed:
                                     fig2_schemes(p, s, inf)[1][1]),
                                    ("none", AugmentationScheme(variant="none"))]]
        return spec, {"p": [100, 200], "schemes": schemes}
    if name == "ar1-desk":
        spec = ExperimentSpec(
            dims=ExperimentDims(200, 400, 1),
            distributions=("uniform",),
            scheme=AugmentationScheme(variant="none"),
            signal=SignalSpec(pattern="sparse", rho_star=1.0),
            logit=LogitConfig(lam=0.01, learning_rate=0.1, grad_tol=1e-6),
            trials=trials or 100, seed=seed)
        return spec, DependenceSpec(kind="ar1", phi=0.5)
    raise KeyError(f"unknown preset {name!r}")


def fig2_schemes(p: int, signal: SignalSpec, informed: bool):
    """The scheme arms of the sparse-signal comparison at width p."""
    rate = 0.2
    if informed:
        n_known = signal.n_known_zero(p)
        forced = tuple(range(p - n_known, p))
        crop = AugmentationScheme(variant="crop", r_crop=rate,
                                  forced_indices=forced)
        flip = AugmentationScheme(variant="sign_flip", r_flip=rate,
                                  forced_indices=forced)
    else:
        crop = AugmentationScheme(variant="crop", r_crop=rate)
        flip = AugmentationScheme(variant="sign_flip", r_flip=rate)
    return [("crop", crop), ("sign-flip", flip),
            ("none", AugmentationScheme(variant="none"))]
