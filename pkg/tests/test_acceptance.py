"""Acceptance gate: one check per reproduction criterion, each printing a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the collected lines are
repeated in the terminal summary.
"""

import math

import numpy as np
import pytest

import conftest
from impulse_solve import exact1d, fp, hjb, mc
from impulse_solve.harness import (application_config, compare_densities, convergence_rates,
                                   fp_errors, hjb_errors, reduced_config, run_fp, run_hjb, run_mc)
from impulse_solve.jumpgrid import GridSpec, build_jump_grid
from impulse_solve.model import SourceSpec, reduced_1d_params
from impulse_solve.policy import ThresholdProfile

pytestmark = pytest.mark.slow

# published reference values
X_BAR = 0.7986
HJB_LINF = {50: 1.680e-2, 100: 8.370e-3, 200: 4.180e-3}
FP_L1 = {50: 5.318e-3, 100: 2.656e-3, 200: 1.945e-3}

FP_DRIFTS: list[tuple[str, float]] = []


def report(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _fp(cfg, thresholds, n, tag):
    res, _ = run_fp(cfg, thresholds, n)
    FP_DRIFTS.append((tag, max(res.max_mass_drift, abs(res.field.mass - 1.0))))
    return res


@pytest.fixture(scope="module")
def sol():
    return exact1d.solve_quintet(reduced_1d_params())


@pytest.fixture(scope="module")
def hjb_runs():
    cfg = reduced_config(L="2n", rho="sec41")
    return {n: run_hjb(cfg, n)[0] for n in (50, 100, 200, 400)}


@pytest.fixture(scope="module")
def fp_runs(sol):
    cfg = reduced_config(L="2n")
    th = ThresholdProfile.constant(sol.x_bar)
    return {n: _fp(cfg, th, n, f"1d n={n}") for n in (50, 100, 200)}


def test_1_exact_oracle(sol):
    checks = [("x_bar", sol.x_bar, X_BAR, 5e-4), ("Phi0", sol.Phi0, 4.253, 1e-3),
              ("Phi+0", sol.Phi_plus0, 2.435, 1e-3), ("Phi1", sol.Phi1, 1.304, 1e-3),
              ("q", sol.q, 0.138, 1e-3), ("r", sol.r, 0.494, 1e-3)]
    ok = all(abs(v - ref) <= tol for _, v, ref, tol in checks)
    detail = ", ".join(f"{k}={v:.5f}" for k, v, _, _ in checks)
    assert report("1 exact oracle", ok, detail)


def test_2_hjb_convergence(hjb_runs, sol):
    ns = (50, 100, 200)
    linf = [hjb_errors(hjb_runs[n], sol)[2] for n in ns]
    rel = [abs(e / HJB_LINF[n] - 1) for e, n in zip(linf, ns)]
    cr = convergence_rates(linf)
    ok = all(r <= 0.15 for r in rel) and all(abs(c - 1.0) <= 0.05 for c in cr)
    detail = (", ".join(f"n={n} linf={e:.3e} ({100 * r:.1f}%)" for n, e, r in zip(ns, linf, rel))
              + f"; CR={', '.join(f'{c:.3f}' for c in cr)}")
    assert report("2 HJB convergence", ok, detail)


def test_3_threshold_accuracy(hjb_runs):
    errs = {n: abs(vf.x_bar[0] - X_BAR) for n, vf in hjb_runs.items()}
    ok = all(e <= 1.0 / n for n, e in errs.items()) and all(vf.is_threshold.all() for vf in hjb_runs.values())
    detail = ", ".join(f"n={n} x_bar={hjb_runs[n].x_bar[0]:.5f} (h={1 / n:.4f})" for n in errs)
    assert report("3 threshold accuracy", ok, detail)


def test_4_fp_accuracy(fp_runs, sol):
    l1 = {n: fp_errors(r.field, sol)[0] for n, r in fp_runs.items()}
    rel = {n: l1[n] / FP_L1[n] - 1 for n in l1}
    ok = all(abs(v) <= 0.15 for v in rel.values())
    detail = ", ".join(f"n={n} l1={l1[n]:.3e} ({100 * rel[n]:+.1f}%)" for n in l1)
    assert report("4 FP accuracy", ok, detail)


@pytest.fixture(scope="module")
def l_sweep(sol):
    n = 200
    out = {"hjb": {}, "fp": {}}
    th = ThresholdProfile.constant(sol.x_bar)
    for rule in ("n/2", "n", "2n", "4n"):
        cfg = reduced_config(L=rule, rho="sec41")
        out["hjb"][rule] = hjb_errors(run_hjb(cfg, n)[0], sol)[0]
        out["fp"][rule] = fp_errors(_fp(cfg, th, n, f"1d n=200 L={rule}").field, sol)[0]
    return out


def test_5_jump_resolution(l_sweep):
    h, f = l_sweep["hjb"], l_sweep["fp"]
    hjb_stable = all(abs(h[r] / h["2n"] - 1) <= 0.05 for r in ("n", "4n"))
    hjb_degrades = h["n/2"] >= 1.5 * h["2n"]
    fp_stable = abs(f["4n"] / f["2n"] - 1) <= 0.05
    fp_jumps = f["n/2"] >= 2.0 * f["2n"]
    ok = hjb_stable and hjb_degrades and fp_stable and fp_jumps
    detail = ("HJB l1 " + ", ".join(f"L={k}:{v:.3e}" for k, v in h.items())
              + "; FP l1 " + ", ".join(f"L={k}:{v:.3e}" for k, v in f.items()))
    assert report("5 jump resolution", ok, detail)


def test_6_conservation(fp_runs, l_sweep, app_runs):
    worst = max(d for _, d in FP_DRIFTS)
    rng = np.random.default_rng(2024)
    ident = 0.0
    for k in range(100):
        n = int(rng.integers(4, 30))
        params = application_config(theta=float(rng.uniform(5, 80))).model
        spec = GridSpec.make(n, int(rng.integers(1, 3 * n)), "sec42", "h")
        op = fp.JumpOperator(build_jump_grid(spec, params), spec)
        prof = ThresholdProfile(np.linspace(0, 1, 5), rng.uniform(-0.3, 1.0, 5))
        rule = fp.ReplenishRule.from_profile(prof, spec)
        f = fp.DensityField(rng.random((n, n)), rng.random(n), rng.random(n), spec.h, spec.hy)
        ident = max(ident, abs(fp.inflow_balance(f, op)),
                    abs(fp.replenish_balance(f, rule, params.Lambda)))
    ok = worst <= 1e-10 and ident <= 1e-12
    detail = f"{len(FP_DRIFTS)} FP runs, max |M-1|={worst:.2e}; identities max residual {ident:.2e}"
    assert report("6 conservation", ok, detail)


def test_7_monte_carlo_1d(sol):
    params = reduced_1d_params()
    th = ThresholdProfile.constant(sol.x_bar)
    ens = mc.EnsembleSpec(paths=1_000_000, dt=0.02, window=100.0, y0=0.0, x0=1.0, seed=20240)
    dens = mc.estimate_density(params, th, ens, 50, 1)
    q, r = float(dens.field.q[0]), float(dens.field.r[0])
    obj = mc.estimate_objective(1.0, 0.0, params, th, paths=1_000_000, dt=0.002, seed=777)
    z = (obj.mean - 1.304) / obj.stderr
    ok = abs(q - 0.137) <= 0.01 and abs(r - 0.495) <= 0.01 and abs(z) <= 3.0
    detail = f"q={q:.4f} r={r:.4f}; objective={obj.mean:.4f} +- {obj.stderr:.4f} ({z:+.2f} SE)"
    assert report("7 Monte-Carlo 1-D", ok, detail)


@pytest.fixture(scope="module")
def app_runs():
    cfg50 = application_config(theta=50.0, n=100)
    cfg50.mc.paths, cfg50.mc.window, cfg50.mc.dt = 40_000, 200.0, 0.01
    vf50 = run_hjb(cfg50)[0]
    vf60 = run_hjb(application_config(theta=60.0, n=100))[0]
    dens = _fp(cfg50, vf50.profile(), 100, "2d theta=50 n=100").field
    mc_est = run_mc(cfg50, vf50.profile())
    return {"vf50": vf50, "vf60": vf60, "fp": dens, "mc": mc_est, "cfg": cfg50}


def test_8_application_2d(app_runs):
    vf50, vf60 = app_runs["vf50"], app_runs["vf60"]
    a = bool(vf50.is_threshold.all())
    rep = compare_densities(app_runs["fp"], app_runs["mc"].field, app_runs["cfg"].compare)
    b = rep["l1_interior"] <= 0.05
    c = rep["max_q_rel"] <= 0.25 and rep["max_r_rel"] <= 0.25
    d = bool(np.all(vf50.x_bar >= vf60.x_bar))
    detail = (f"(a) prefix={a}; (b) l1={rep['l1_interior']:.4f}; (c) max q FP/MC="
              f"{rep['max_q'][0]:.3f}/{rep['max_q'][1]:.3f}, max r={rep['max_r'][0]:.3f}/"
              f"{rep['max_r'][1]:.3f}; (d) x_bar(50)>=x_bar(60) in {int(np.sum(vf50.x_bar >= vf60.x_bar))}"
              f"/{vf50.x_bar.size} rows")
    assert report("8 2-D application", a and b and c and d, detail)


def test_9_reductions():
    params = reduced_1d_params()
    n = 50
    one = GridSpec.make(n, "2n", "sec41", "2h", dim=1)
    two = GridSpec.make(n, "2n", "sec41", "2h", dim=2)
    v1 = hjb.value_iteration(one, build_jump_grid(one, params), params)
    v2 = hjb.value_iteration(two, build_jump_grid(two, params), params)
    gap = float(np.max(np.abs(v2.Phi - v1.Phi[:, :1])))
    app = application_config(theta=50.0).model
    th = ThresholdProfile.constant(0.2)
    ys_ok = all(np.all(mc.simulate_path(1.0, 0.0, 200.0, 0.01, app, th, seed=11, path=k)[2] == 0.0)
                for k in range(50))
    ens = mc.EnsembleSpec(paths=5000, dt=0.01, window=50.0, y0=0.0, seed=5)
    ys_ok &= mc.estimate_density(app.with_(source=SourceSpec("linear", 1.0)), th, ens, 20, 20).y_zero_preserved
    ok = gap <= 1e-10 and ys_ok
    assert report("9 reductions", ok, f"max row gap={gap:.2e}; y0=0 paths stay at y=0: {ys_ok}")
