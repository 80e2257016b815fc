"""Coupled sediment-algae run: value function, thresholds, FP and MC densities.

    python3 scripts/application_2d.py --theta 50 --n 100 --out runs/app50

Uses the pipeline runner, so the output directory gets a manifest.json.
"""

import argparse
import logging

from impulse_solve.harness import CompareFailure, StageError, application_config, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta", type=float, default=50.0)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--paths", type=int, default=40_000)
    ap.add_argument("--window", type=float, default=200.0)
    ap.add_argument("--flux", default="upwind", choices=["upwind", "weno"])
    ap.add_argument("--seed", type=int, default=12345)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = application_config(theta=args.theta, n=args.n, flux=args.flux,
                             pipeline=["hjb", "fp", "mc", "compare"])
    cfg.mc.paths, cfg.mc.window, cfg.mc.seed = args.paths, args.window, args.seed
    out = args.out or f"runs/app{args.theta:g}_n{args.n}"
    try:
        man = run_pipeline(cfg, out)
    except StageError as err:
        print(err)
        raise SystemExit(2 if isinstance(err.err, CompareFailure) else 1)
    vf = man["state"]["hjb"]
    print("threshold x_bar(y) every 10th row:",
          ", ".join(f"{y:.2f}:{x:.3f}" for y, x in zip(vf.y[::10], vf.x_bar[::10])))
    rep = man["compare"]
    print(f"FP vs MC interior l1 = {rep['l1_interior']:.4f}")
    for k in ("p", "q", "r"):
        a, b = rep[f"max_{k}"]
        print(f"max {k}: FP {a:.4g}  MC {b:.4g}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
