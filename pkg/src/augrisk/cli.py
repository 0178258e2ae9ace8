"""Command-line front end.

Subcommands: gen, fit, universality, dependence, solve-eqs, cgmt-check,
report.  Every run writes a manifest echoing the fully resolved
configuration next to its outputs.  Exit codes: 0 ok, 2 configuration
error, 3 runtime failure, 4 check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import rngs
from .augment import (AugmentationScheme, CoordinateDistribution,
                      GroupStructure, SignalSpec, augment_dataset,
                      make_beta_star, sample_original, save_cache, to_csv)
from .covmodel import ExperimentDims, build_from_scheme
from .logit import (AugmentedData, LabelModel, LogitConfig, fit_gd,
                    generate_labels)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK_FAILED = 4

OUTPUT_ENV = "AUGRISK_OUT"


class ConfigError(ValueError):
    pass


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV, ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path: str | None, overrides: dict, allowed: set[str]) -> dict:
    cfg = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _write_manifest(out: Path, name: str, resolved: dict) -> None:
    manifest = {"command": name, "resolved_config": resolved,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    (out / f"{name}-manifest.json").write_text(json.dumps(manifest, indent=2,
                                                          default=str))


def _scheme_from_config(cfg: dict) -> AugmentationScheme:
    variant = cfg.get("scheme", "none")
    groups = None
    if "group_sizes" in cfg:
        groups = GroupStructure(sizes=tuple(cfg["group_sizes"]))
    elif variant == "permutation":
        p, n_groups = cfg["p"], cfg.get("n_groups", 1)
        groups = GroupStructure.even(p, n_groups)
    return AugmentationScheme(
        variant=variant, r_perm=cfg.get("r_perm", 1.0),
        r_flip=cfg.get("r_flip", 1.0), r_crop=cfg.get("r_crop", 0.0),
        noise_var=cfg.get("noise_var", 0.0), groups=groups)


def cmd_gen(args) -> int:
    allowed = {"p", "m", "k", "scheme", "r_perm", "r_flip", "r_crop",
               "noise_var", "n_groups", "group_sizes", "distribution",
               "rho_star", "s0", "pattern"}
    cfg = _load_config(args.config, {"p": args.p, "m": args.m, "k": args.k,
                                     "scheme": args.scheme,
                                     "distribution": args.distribution}, allowed)
    for key in ("p", "m", "k"):
        if key not in cfg:
            raise ConfigError(f"missing required key: {key}")
    dims = ExperimentDims(cfg["p"], cfg["m"], cfg["k"])
    scheme = _scheme_from_config({**cfg, "p": dims.p})
    groups = scheme.groups or GroupStructure.single(dims.p)
    dist = CoordinateDistribution(cfg.get("distribution", "gaussian"))
    signal = SignalSpec(pattern=cfg.get("pattern", "sparse"),
                        rho_star=cfg.get("rho_star", 1.0), s0=cfg.get("s0", 0.0))
    beta = make_beta_star(signal, groups, dims.p,
                          rngs.stream(args.seed, 0, rngs.ROLE_SIGNAL))
    z = sample_original(dist, groups, dims.m, dims.p,
                        rngs.stream(args.seed, 0, rngs.ROLE_DATA))
    x, blocks = augment_dataset(z, scheme, dims.k,
                                rngs.stream(args.seed, 0, rngs.ROLE_AUGMENT))
    y = generate_labels(AugmentedData(x=x, blocks=blocks, z=z),
                        LabelModel(kind="da"), beta,
                        rngs.stream(args.seed, 0, rngs.ROLE_LABELS))
    out = _out_dir(args)
    if args.format == "csv":
        to_csv(out / "dataset.csv", x, y, blocks)
    else:
        save_cache(out / "dataset.npz", x, y, blocks)
    np.save(out / "beta_star.npy", beta)
    _write_manifest(out, "gen", {**cfg, "seed": args.seed, "format": args.format})
    return EXIT_OK


def cmd_fit(args) -> int:
    from .augment import load_cache
    data = load_cache(args.data)
    config = LogitConfig(lam=args.lam, learning_rate=args.learning_rate,
                         max_iters=args.max_iters, grad_tol=args.grad_tol,
                         backtracking=not args.no_backtracking)
    fit = fit_gd(data["x"], data["y"].astype(float), config)
    out = _out_dir(args)
    (out / "fit.json").write_text(fit.to_json())
    _write_manifest(out, "fit", {"data": str(args.data), "lam": args.lam,
                                 "learning_rate": args.learning_rate,
                                 "max_iters": args.max_iters,
                                 "grad_tol": args.grad_tol})
    print(f"train_risk={fit.train_risk:.6f} iters={fit.iters} "
          f"converged={fit.converged}")
    return EXIT_OK


def cmd_universality(args) -> int:
    from .harness import preset, run_universality_sweep
    if args.trials is not None and args.trials < 2:
        raise ConfigError("trials must be >= 2")
    try:
        spec, sweep = preset(args.preset, seed=args.seed, trials=args.trials)
    except KeyError as e:
        raise ConfigError(str(e)) from None
    report = run_universality_sweep(spec, sweep)
    out = _out_dir(args)
    report.to_csv(out / "universality.csv")
    (out / "universality.json").write_text(report.to_json())
    _write_manifest(out, "universality",
                    {"preset": args.preset, "seed": args.seed,
                     "trials": args.trials or spec.trials})
    print(f"wrote {len(report.cells)} cells to {out / 'universality.csv'}")
    return EXIT_OK


def cmd_dependence(args) -> int:
    from .harness import DependenceSpec, preset, run_dependence_experiment
    spec, dep = preset("ar1-desk", seed=args.seed, trials=args.trials)
    if args.kind:
        dep = DependenceSpec(kind=args.kind, phi=args.phi, m_dep=args.m_dep)
    report = run_dependence_experiment(spec, dep)
    out = _out_dir(args)
    report.to_csv(out / "dependence.csv")
    (out / "dependence.json").write_text(report.to_json())
    _write_manifest(out, "dependence", {"kind": dep.kind, "phi": dep.phi,
                                        "m_dep": dep.m_dep, "seed": args.seed})
    print(f"wrote {len(report.cells)} cells to {out / 'dependence.csv'}")
    return EXIT_OK


def cmd_solve_eqs(args) -> int:
    from .eqs import ChiTerms, EqsState, MCPool, isotropic_warm_start, solve
    from .eqs.solve import NoConvergenceError
    from .iso_oracle import IsoSolution, iso_residuals_full, isotropic_oracle_solve

    if args.kappa is not None and args.kappa <= 0:
        raise ConfigError("kappa must be positive")
    if args.lam <= 0:
        raise ConfigError("lambda must be positive")
    out = _out_dir(args)

    if args.warm_start_file:
        warm = json.loads(Path(args.warm_start_file).read_text())
        init = EqsState(**{k: warm["state"][k] for k in warm["state"]})
    else:
        init = None

    if args.isotropic_check or args.scheme == "none":
        kappa = args.kappa if args.kappa is not None else 1.0
        p = args.p or 100
        m_eff = p / kappa
        dims = ExperimentDims(p, max(1, int(round(m_eff))), 1)
        beta = np.ones(p) * args.kappa_star
        model = build_from_scheme(AugmentationScheme(variant="none"), dims, beta)
        chi = ChiTerms(model, model.sigma_o, args.lam, m_eff, k=1)
        pool = MCPool.quadrature(k=1, n_nodes=args.gh_nodes)
        if init is None:
            iso = isotropic_oracle_solve(kappa, args.lam, args.kappa_star)
            init = isotropic_warm_start(iso.alpha, iso.sigma2, iso.tau2,
                                        iso.nu2, iso.r2, iso.theta)
        k = 1
    elif args.scheme == "sign_flip":
        p = args.p or 400
        k = args.k
        m = args.m or max(2, int(round(p / (args.kappa * k))))
        dims = ExperimentDims(p, m, k)
        n_zero = int(np.ceil((1.0 - args.rho_star) * p))
        beta = np.zeros(p)
        sig_rng = rngs.stream(args.seed, 0, rngs.ROLE_SIGNAL)
        beta[:p - n_zero] = sig_rng.standard_t(3, p - n_zero) / np.sqrt(3.0)
        scheme = AugmentationScheme(variant="sign_flip", r_flip=args.r_flip)
        model = build_from_scheme(scheme, dims, beta)
        chi = ChiTerms(model, model.sigma_o, args.lam, m, k=k)
        pool = MCPool.monte_carlo(args.n_mc, k, rngs.stream(args.seed, 1))
        if init is None:
            iso = isotropic_oracle_solve(dims.kappa, args.lam, model.kappa_star)
            init = isotropic_warm_start(iso.alpha, iso.sigma2, iso.tau2,
                                        iso.nu2, iso.r2, iso.theta)
            init = init.replace(sigma1=0.05, r1=0.05, tau1=10.0, nu1=10.0)
    else:
        raise ConfigError(f"unsupported scheme for solve-eqs: {args.scheme!r}")

    try:
        sol = solve(init, pool, chi, k, tol=args.tol)
    except NoConvergenceError as e:
        sol = e.best
    payload = sol.to_dict()
    if args.isotropic_check:
        cand = IsoSolution(alpha=sol.state.alpha, sigma2=sol.state.sigma2,
                           tau2=sol.state.tau2, r2=sol.state.r2,
                           gamma=sol.state.gamma, theta=sol.state.theta,
                           residual_norm=0.0)
        oracle_res = iso_residuals_full(cand, kappa, args.lam, args.kappa_star)
        payload["isotropic_check"] = {
            "oracle_residual_max": float(np.abs(oracle_res).max()),
            "sigma1": sol.state.sigma1, "r1": sol.state.r1,
            "boundary_hit": sol.boundary_hit,
        }
        print(f"isotropic check: oracle residual "
              f"{payload['isotropic_check']['oracle_residual_max']:.3e}; "
              f"sigma1={sol.state.sigma1} r1={sol.state.r1} (boundary)")
    (out / "eqs-solution.json").write_text(json.dumps(payload))
    _write_manifest(out, "solve-eqs", {k: v for k, v in vars(args).items()
                                       if k not in ("func", "out")})
    print(f"residual_norm={sol.residual_norm:.3e} chi2_bar={sol.chi2_bar:.6f} "
          f"converged={sol.converged}")
    return EXIT_OK if sol.converged else EXIT_RUNTIME


def cmd_cgmt_check(args) -> int:
    from .cgmt import (LowRankCovariance, SaddleProblem, build_da_lowrank,
                       mc_inequality_check)
    if args.trials < 500:
        raise ConfigError("trials must be >= 500")
    rng = rngs.stream(args.seed, 7)
    p, n = args.p, args.n
    if args.cov_file:
        payload = json.loads(Path(args.cov_file).read_text())
        try:
            cov = LowRankCovariance.create(
                [np.asarray(s) for s in payload["sigma_l"]],
                [np.asarray(s) for s in payload["sigma_tilde_l"]])
        except ValueError as e:
            raise ConfigError(f"invalid covariance file: {e}") from None
    elif args.da_scheme:
        k = args.k
        if n % k != 0:
            raise ConfigError("n must be divisible by k for the DA structure")
        dims = ExperimentDims(p, n // k, k)
        if args.da_scheme == "permutation":
            groups = GroupStructure.even(p, max(1, p // 3))
            scheme = AugmentationScheme(variant="permutation", r_perm=1.0,
                                        groups=groups)
        elif args.da_scheme == "sign_flip":
            scheme = AugmentationScheme(variant="sign_flip", r_flip=0.5)
        else:
            raise ConfigError(f"unknown da scheme {args.da_scheme!r}")
        beta = rngs.stream(args.seed, 8).standard_normal(p)
        model = build_from_scheme(scheme, dims, beta)
        cov = build_da_lowrank(model, dims)
    else:
        if args.m_rank == 1:
            cov = LowRankCovariance.create([np.eye(p)], [np.eye(n)])
        else:
            rng_c = rngs.stream(args.seed, 9)
            mats = []
            for _ in range(args.m_rank):
                a = rng_c.standard_normal((p, p)) / np.sqrt(p)
                mats.append(a @ a.T)
            tmats = []
            for _ in range(args.m_rank):
                a = rng_c.standard_normal((n, n)) / np.sqrt(n)
                tmats.append(a @ a.T)
            cov = LowRankCovariance.create(mats, tmats)
    prob = SaddleProblem(a=0.3 * np.ones(cov.p), b=0.2 * np.ones(cov.n),
                         mu_w=1.0, mu_u=1.0, r_w=3.0, r_u=3.0)
    report = mc_inequality_check(cov, prob, args.trials, rng)
    out = _out_dir(args)
    report.to_csv(out / "cgmt-check.csv")
    (out / "cgmt-check.json").write_text(report.to_json())
    _write_manifest(out, "cgmt-check", {k: v for k, v in vars(args).items()
                                        if k not in ("func", "out")})
    print(f"violations={report.n_violations} over {len(report.c_grid)} thresholds")
    return EXIT_OK if report.n_violations == 0 else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    payload = json.loads(Path(args.input).read_text())
    cells = payload.get("cells", [])
    if not cells:
        print("empty report")
        return EXIT_OK
    cols = ["scheme_label", "dist", "sweep_name", "sweep_value",
            "train_risk_mean", "train_risk_se", "test_risk_mean",
            "test_risk_se", "trials_ok"]
    print("  ".join(f"{c:>16s}" for c in cols))
    for c in cells:
        vals = []
        for col in cols:
            v = c.get(col, "")
            vals.append(f"{v:16.5f}" if isinstance(v, float) else f"{v!s:>16s}")
        print("  ".join(vals))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="augrisk", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None,
                       help=f"output dir (default ${OUTPUT_ENV} or '.')")

    g = sub.add_parser("gen", help="generate an augmented dataset")
    common(g)
    g.add_argument("--config", default=None)
    g.add_argument("--p", type=int, default=None)
    g.add_argument("--m", type=int, default=None)
    g.add_argument("--k", type=int, default=None)
    g.add_argument("--scheme", default=None,
                   choices=["none", "permutation", "sign_flip", "crop",
                            "noise_inject"])
    g.add_argument("--distribution", default=None)
    g.add_argument("--format", default="csv", choices=["csv", "npz"])
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit one dataset")
    common(f)
    f.add_argument("--data", required=True)
    f.add_argument("--lam", type=float, default=0.01)
    f.add_argument("--learning-rate", type=float, default=0.1)
    f.add_argument("--max-iters", type=int, default=1_000_000)
    f.add_argument("--grad-tol", type=float, default=1e-8)
    f.add_argument("--no-backtracking", action="store_true")
    f.set_defaults(func=cmd_fit)

    u = sub.add_parser("universality", help="run a universality sweep preset")
    common(u)
    u.add_argument("--preset", default="fig1-desk")
    u.add_argument("--trials", type=int, default=None)
    u.set_defaults(func=cmd_universality)

    d = sub.add_parser("dependence", help="row-dependent universality run")
    common(d)
    d.add_argument("--kind", default=None, choices=["ar1", "m-dependent"])
    d.add_argument("--phi", type=float, default=0.5)
    d.add_argument("--m-dep", type=int, default=2)
    d.add_argument("--trials", type=int, default=None)
    d.set_defaults(func=cmd_dependence)

    s = sub.add_parser("solve-eqs", help="solve the fixed-point system")
    common(s)
    s.add_argument("--scheme", default="none", choices=["none", "sign_flip"])
    s.add_argument("--isotropic-check", action="store_true",
                   help="compare against the independent six-equation solver")
    s.add_argument("--kappa", type=float, default=None)
    s.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.01)
    s.add_argument("--kappa-star", type=float, default=1.0)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--p", type=int, default=None)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--r-flip", type=float, default=0.2)
    s.add_argument("--rho-star", type=float, default=0.2)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--gh-nodes", type=int, default=120)
    s.add_argument("--n-mc", type=int, default=200_000)
    s.add_argument("--warm-start-file", default=None)
    s.set_defaults(func=cmd_solve_eqs)

    c = sub.add_parser("cgmt-check", help="tail-inequality Monte Carlo check")
    common(c)
    c.add_argument("--m-rank", type=int, default=1)
    c.add_argument("--p", type=int, default=6)
    c.add_argument("--n", type=int, default=9)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--trials", type=int, default=2000)
    c.add_argument("--da-scheme", default=None,
                   choices=["permutation", "sign_flip"])
    c.add_argument("--cov-file", default=None)
    c.set_defaults(func=cmd_cgmt_check)

    r = sub.add_parser("report", help="pretty-print a report JSON")
    r.add_argument("--input", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
