"""Command line front end: ``impulse-solve <exact1d|hjb|fp|mc|sweep|pipeline>``.

Exit status: 0 on success, 1 on a solver or input error, 2 when a density
comparison misses its tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import exact1d, fp, hjb, mc
from .harness import (OUT_ENV, CompareFailure, ExperimentConfig, StageError, default_out_dir,
                      run_pipeline, write_density, write_exact, write_mass_history, write_rows,
                      write_value_field, convergence_sweep)
from .jumpgrid import GridSpec, build_jump_grid
from .model import ModelParams, reduced_1d_params
from .policy import ThresholdProfile

EXIT_OK, EXIT_SOLVER, EXIT_COMPARE = 0, 1, 2


def _params(path: str | None) -> ModelParams:
    return ModelParams.from_json(path) if path else reduced_1d_params()


def _dim(args, params: ModelParams) -> int:
    mode = getattr(args, "mode", "auto")
    if mode == "auto":
        return 1 if params.G == 0.0 and params.source.is_zero() else 2
    return 1 if mode == "1d" else 2


def _out(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    d = default_out_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d / default_name


def _thresholds(arg: str | None, params: ModelParams, dim: int) -> ThresholdProfile:
    if arg is None:
        if dim != 1:
            raise ValueError("--thresholds is required in 2-D (use the hjb threshold table)")
        return ThresholdProfile.constant(exact1d.solve_threshold(params))
    try:
        return ThresholdProfile.constant(float(arg))
    except ValueError:
        return ThresholdProfile.from_csv(arg)


def cmd_exact1d(args) -> int:
    params = _params(args.config)
    sol = exact1d.solve_quintet(params)
    print(f"x_bar     = {sol.x_bar:.10f}")
    print(f"Phi0      = {sol.Phi0:.10f}")
    print(f"Phi_plus0 = {sol.Phi_plus0:.10f}")
    print(f"Phi1      = {sol.Phi1:.10f}")
    print(f"q         = {sol.q:.10f}")
    print(f"r         = {sol.r:.10f}")
    out = _out(args, "exact1d.csv")
    write_exact(out, sol, args.points)
    ThresholdProfile.constant(sol.x_bar).to_csv(out.with_name(out.stem + "_thresholds.csv"))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_hjb(args) -> int:
    params = _params(args.config)
    dim = _dim(args, params)
    spec = GridSpec.make(args.n, args.L, args.rho_preset if args.rho is None else args.rho,
                         "h", dim=dim)
    grid = build_jump_grid(spec, params, x_rounding=args.x_rounding)
    vf = hjb.value_iteration(spec, grid, params, tol=args.tol, max_iter=args.max_iter,
                             interp=args.interp)
    out = _out(args, "hjb.csv")
    tpath = write_value_field(out, vf)
    print(f"sweeps={vf.iterations} change={vf.final_residual:.3e} threshold_type={bool(vf.is_threshold.all())}")
    if dim == 1:
        print(f"x_bar = {vf.x_bar[0]}")
    print(f"wrote {out} and {tpath}")
    return EXIT_OK


def cmd_fp(args) -> int:
    params = _params(args.config)
    dim = _dim(args, params)
    dt = args.dt if args.dt is not None else ("2h" if dim == 1 else "h")
    spec = GridSpec.make(args.n, args.L, "sec41", dt, dim=dim)
    grid = build_jump_grid(spec, params)
    th = _thresholds(args.thresholds, params, dim)
    res = fp.solve_stationary(spec, grid, params, th, tol=args.tol, max_steps=args.max_steps,
                              flux_mode=args.flux)
    out = _out(args, "fp.csv")
    write_density(out, res.field)
    mpath = out.with_name(out.stem + "_mass.csv")
    write_mass_history(mpath, res.mass_history)
    f = res.field
    print(f"steps={res.steps} mass={f.mass:.15f} max|M-M0|={res.max_mass_drift:.2e} "
          f"max p={f.p.max():.4g} q={f.q.max():.4g} r={f.r.max():.4g}")
    print(f"wrote {out} and {mpath}")
    return EXIT_OK


def cmd_mc(args) -> int:
    params = _params(args.config)
    dim = _dim(args, params)
    th = _thresholds(args.thresholds, params, dim)
    if args.action == "objective":
        est = mc.estimate_objective(args.x0, args.y0, params, th, paths=args.paths, dt=args.dt,
                                    seed=args.seed, horizon=args.horizon)
        print(json.dumps({"mean": est.mean, "stderr": est.stderr, "bias_bound": est.bias_bound,
                          "paths": est.paths, "horizon": est.horizon, "seed": args.seed}))
        return EXIT_OK
    y0 = 0.0 if dim == 1 else args.y0
    window = 100.0
    ens = mc.EnsembleSpec(paths=args.paths, dt=args.dt, burn_in=args.burn_in, seed=args.seed,
                          x0=args.x0, y0=y0, window=window,
                          horizon=args.horizon)
    est = mc.estimate_density(params, th, ens, args.n, 1 if dim == 1 else args.n)
    out = _out(args, "mc.csv")
    write_density(out, est.field)
    f = est.field
    print(f"samples={est.samples:.0f} seed={args.seed} max p={f.p.max():.4g} q={f.q.max():.4g} r={f.r.max():.4g}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig(model=reduced_1d_params(), mode="1d")
    cfg.L = args.L or cfg.L
    if args.kind == "hjb":
        cfg.rho = args.rho_preset
    rows = convergence_sweep(cfg, args.kind, args.ns)
    out = _out(args, f"sweep_{args.kind}.csv")
    write_rows(out, rows)
    for r in rows:
        print({k: (f"{v:.4g}" if isinstance(v, float) else v) for k, v in r.items()})
    print(f"wrote {out}")
    return EXIT_SOLVER if any("error" in r for r in rows) else EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.stages:
        cfg.pipeline = args.stages
    man = run_pipeline(cfg, args.out)
    if "compare" in man:
        print(json.dumps(man["compare"], default=str))
    print(f"stages: {man['stages']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="impulse-solve", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help="output CSV (default: $%s or ./runs)" % OUT_ENV):
        p.add_argument("--config", help="model parameter JSON")
        p.add_argument("--out", help=out_help)
        p.add_argument("--mode", choices=["auto", "1d", "2d"], default="auto")

    p = sub.add_parser("exact1d", help="closed-form reduced solution")
    common(p)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_exact1d)

    p = sub.add_parser("hjb", help="value iteration")
    common(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--L", default="2n")
    p.add_argument("--rho-preset", default="sec41", choices=["sec31", "sec41", "sec42"])
    p.add_argument("--rho", type=float, default=None, help="explicit pseudo-time step")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.add_argument("--interp", choices=["weno", "linear"], default="weno")
    p.add_argument("--x-rounding", choices=["ceil", "floor", "next"], default="ceil")
    p.set_defaults(func=cmd_hjb)

    p = sub.add_parser("fp", help="stationary Fokker-Planck solve")
    common(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--L", default="2n")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-steps", type=int, default=10_000_000)
    p.add_argument("--thresholds", help="threshold CSV (y,x_bar) or a constant")
    p.add_argument("--flux", choices=["upwind", "weno"], default="upwind")
    p.set_defaults(func=cmd_fp)

    p = sub.add_parser("mc", help="Monte-Carlo density or objective")
    common(p)
    p.add_argument("action", nargs="?", choices=["density", "objective"], default="density")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--thresholds", help="threshold CSV (y,x_bar) or a constant")
    p.add_argument("--n", type=int, default=50, help="histogram cells per axis")
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--y0", type=float, default=0.0)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("sweep", help="convergence table")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out")
    p.add_argument("--kind", choices=["hjb", "fp"], default="hjb")
    p.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200])
    p.add_argument("--L", default=None)
    p.add_argument("--rho-preset", default="sec41")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pipeline", help="run an experiment config end to end")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stages", nargs="*", help="override the configured stage list")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CompareFailure as err:
        print(f"compare failed: {err.report}", file=sys.stderr)
        return EXIT_COMPARE
    except StageError as err:
        print(str(err), file=sys.stderr)
        return EXIT_COMPARE if isinstance(err.err, CompareFailure) else EXIT_SOLVER
    except (RuntimeError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
