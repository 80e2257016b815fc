"""Convergence and sensitivity tables for the reduced (no-algae) model.

    python3 scripts/reproduce_tables.py --out runs/tables [--ns 50 100 200 400] [--rounding next]

Writes hjb_convergence.csv, fp_convergence.csv, hjb_L.csv, fp_L.csv and thresholds.csv.
"""

import argparse
import logging
from pathlib import Path

from impulse_solve import exact1d
from impulse_solve.harness import (convergence_sweep, fp_errors, hjb_errors, reduced_config,
                                   run_fp, run_hjb, write_rows)
from impulse_solve.policy import ThresholdProfile


def L_table(n: int, rounding: str) -> tuple[list, list]:
    sol = exact1d.solve_quintet(reduced_config().model)
    th = ThresholdProfile.constant(sol.x_bar)
    hrows, frows = [], []
    for rule in ("n/4", "n/2", "n", "2n", "4n"):
        cfg = reduced_config(L=rule, x_rounding=rounding)
        e = hjb_errors(run_hjb(cfg, n)[0], sol)
        hrows.append({"L": rule, "l1": e[0], "l2": e[1], "linf": e[2]})
        e = fp_errors(run_fp(cfg, th, n)[0].field, sol)
        frows.append({"L": rule, "l1": e[0], "l2": e[1], "linf": e[2]})
    return hrows, frows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/tables")
    ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--rounding", default="ceil", choices=["ceil", "floor", "next"])
    ap.add_argument("--L-n", type=int, default=200, help="resolution for the L tables")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = reduced_config(x_rounding=args.rounding)
    hjb_rows = convergence_sweep(cfg, "hjb", args.ns)
    write_rows(out / "hjb_convergence.csv", hjb_rows)
    write_rows(out / "thresholds.csv",
               [{"n": r["n"], "x_bar": r.get("threshold"), "error": r.get("threshold_error")}
                for r in hjb_rows])
    write_rows(out / "fp_convergence.csv", convergence_sweep(reduced_config(), "fp", args.ns))
    h, f = L_table(args.L_n, args.rounding)
    write_rows(out / "hjb_L.csv", h)
    write_rows(out / "fp_L.csv", f)
    for name in ("hjb_convergence", "fp_convergence", "hjb_L", "fp_L", "thresholds"):
        print(f"--- {name}")
        print((out / f"{name}.csv").read_text())


if __name__ == "__main__":
    main()
