"""Experiment plumbing: configs, error norms, convergence sweeps, pipelines and CSV output."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import exact1d, fp, hjb, mc
from .jumpgrid import GridSpec, build_jump_grid, eval_L_rule
from .model import ModelParams, PhysicalInputs, application_params, reduced_1d_params
from .policy import ThresholdProfile

log = logging.getLogger(__name__)

OUT_ENV = "IMPULSE_SOLVE_OUT"
STAGES = ("exact1d", "hjb", "fp", "mc", "compare")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"stage {stage!r} failed: {err}")
        self.stage = stage
        self.err = err


# ---------------------------------------------------------------- configs

@dataclass
class MCConfig:
    paths: int = 20_000
    dt: float = 0.01
    burn_in: float | None = None
    window: float = 200.0
    seed: int = 12345
    x0: float = 1.0
    y0: float = 0.5


@dataclass
class CompareTolerance:
    l1: float = 0.05
    max_rel: float = 0.25


@dataclass
class ExperimentConfig:
    model: ModelParams
    n: int = 50
    L: int | str = "2n"
    rho: float | str = "sec41"
    dt: float | str = "2h"
    mode: str = "1d"
    pipeline: list = field(default_factory=list)
    sweep: list | None = None
    threshold_source: str = "auto"          # exact | hjb | auto
    x_rounding: str = "ceil"
    interp: str = "weno"
    flux: str = "upwind"
    hjb_tol: float = 1e-12
    fp_tol: float = 1e-10
    max_iter: int = 1_000_000
    max_steps: int = 10_000_000
    mc: MCConfig = field(default_factory=MCConfig)
    compare: CompareTolerance = field(default_factory=CompareTolerance)
    physical: PhysicalInputs | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.mode not in ("1d", "2d"):
            raise ValueError("mode must be '1d' or '2d'")
        if self.mode == "1d":
            # the reduced model has no algae: no growth and no disutility
            if self.model.G != 0.0 or not self.model.source.is_zero():
                raise ValueError("1-D mode requires G = 0 and S = 0")
        bad = [s for s in self.pipeline if s not in STAGES]
        if bad:
            raise ValueError(f"unknown pipeline stages {bad}")
        for n in self.sweep or []:
            eval_L_rule(self.L, n)

    @property
    def dim(self) -> int:
        return 1 if self.mode == "1d" else 2

    def grid(self, n: int | None = None) -> GridSpec:
        return GridSpec.make(n or self.n, self.L, self.rho, self.dt, dim=self.dim)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("model", "physical")}
        d["model"] = self.model.to_dict()
        d["physical"] = asdict(self.physical) if self.physical else None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "model" in data:
            model = ModelParams.from_dict(data.pop("model"))
        else:
            keys = {"delta", "Lambda", "lambda", "lam", "c", "d", "xi", "G", "source", "levy",
                    "z_lo", "z_hi"}
            mdict = {k: data.pop(k) for k in list(data) if k in keys or k.startswith(("source.", "levy."))}
            model = ModelParams.from_dict(mdict)
        mcd = MCConfig(**data.pop("mc", {}) or {})
        cmp = CompareTolerance(**data.pop("compare", {}) or {})
        phys = data.pop("physical", None)
        phys = PhysicalInputs(**phys) if phys else None
        return cls(model=model, mc=mcd, compare=cmp, physical=phys, **data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def reduced_config(**kw) -> ExperimentConfig:
    return ExperimentConfig(model=reduced_1d_params(), mode="1d", **kw)


def application_config(theta: float = 50.0, n: int = 100, **kw) -> ExperimentConfig:
    kw.setdefault("rho", "sec42")
    kw.setdefault("dt", "h")
    return ExperimentConfig(model=application_params(theta=theta), n=n, mode="2d", **kw)


# ---------------------------------------------------------------- norms

def error_norms(err: np.ndarray, weights: np.ndarray | float) -> tuple[float, float, float]:
    """(sum |e| w, sqrt(sum e^2 w), max |e|)."""
    e = np.asarray(err, dtype=float)
    w = np.broadcast_to(np.asarray(weights, dtype=float), e.shape)
    if e.size == 0:
        return 0.0, 0.0, 0.0
    return float(np.sum(np.abs(e) * w)), float(np.sqrt(np.sum(e * e * w))), float(np.max(np.abs(e)))


def vertex_weights(n: int) -> np.ndarray:
    """Trapezoid weights h (h/2 at both ends) on the vertices of [0, 1]."""
    w = np.full(n + 1, 1.0 / n)
    w[[0, -1]] *= 0.5
    return w


def hjb_errors(vf: hjb.ValueField, sol: exact1d.Exact1DSolution):
    """Norms of the 1-D value-function error; the x = 0 vertex compares with Phi0."""
    e = vf.Phi[:, 0] - exact1d.exact_value(vf.x, sol)
    return error_norms(e, vertex_weights(vf.x.size - 1))


def fp_errors(f: fp.DensityField, sol: exact1d.Exact1DSolution, atoms: bool = True):
    """Norms of the 1-D density error: cells at their centres (weight h), atoms with weight h."""
    e = f.p[:, 0] - exact1d.exact_density(f.x_cells, sol)
    w = np.full(e.size, f.hx)
    if atoms:
        e = np.concatenate([e, [f.q[0] - sol.q, f.r[0] - sol.r]])
        w = np.concatenate([w, [f.hx, f.hx]])
    return error_norms(e, w)


def convergence_rates(errors: Sequence[float]) -> list[float]:
    """log2(e_k / e_{k+1}) for consecutive entries (grids refined by a factor 2)."""
    return [math.log2(a / b) if a > 0 and b > 0 else float("nan") for a, b in zip(errors, errors[1:])]


# ---------------------------------------------------------------- stages

def run_hjb(cfg: ExperimentConfig, n: int | None = None) -> tuple[hjb.ValueField, GridSpec]:
    spec = cfg.grid(n)
    grid = build_jump_grid(spec, cfg.model, x_rounding=cfg.x_rounding)
    vf = hjb.value_iteration(spec, grid, cfg.model, tol=cfg.hjb_tol, max_iter=cfg.max_iter,
                             interp=cfg.interp)
    return vf, spec


def run_fp(cfg: ExperimentConfig, thresholds: ThresholdProfile, n: int | None = None,
           start: fp.DensityField | None = None) -> tuple[fp.StationaryResult, GridSpec]:
    spec = cfg.grid(n)
    grid = build_jump_grid(spec, cfg.model)
    res = fp.solve_stationary(spec, grid, cfg.model, thresholds, tol=cfg.fp_tol,
                              max_steps=cfg.max_steps, flux_mode=cfg.flux, start=start)
    return res, spec


def run_mc(cfg: ExperimentConfig, thresholds: ThresholdProfile, n: int | None = None) -> mc.DensityEstimate:
    n = n or cfg.n
    m = cfg.mc
    y0 = 0.0 if cfg.dim == 1 else m.y0
    ens = mc.EnsembleSpec(paths=m.paths, dt=m.dt, burn_in=m.burn_in, window=m.window,
                          seed=m.seed, x0=m.x0, y0=y0)
    return mc.estimate_density(cfg.model, thresholds, ens, n, 1 if cfg.dim == 1 else n)


def compare_densities(a: fp.DensityField, b: fp.DensityField,
                      tol: CompareTolerance | None = None) -> dict:
    """Interior l1 distance, component maxima and atom differences between two densities."""
    tol = tol or CompareTolerance()
    if a.p.shape != b.p.shape:
        raise ValueError(f"grid mismatch {a.p.shape} vs {b.p.shape}")
    l1 = float(np.abs(a.p - b.p).sum() * a.hx * a.hy)
    rep: dict[str, Any] = {"l1_interior": l1}
    ok = l1 <= tol.l1
    for name in ("p", "q", "r"):
        ma, mb = float(getattr(a, name).max()), float(getattr(b, name).max())
        rel = abs(ma - mb) / max(abs(mb), 1e-300) if (ma or mb) else 0.0
        rep[f"max_{name}"] = (ma, mb)
        rep[f"max_{name}_rel"] = rel
        if name != "p":
            ok &= rel <= tol.max_rel
    rep["atom_mass_diff"] = (float((a.q.sum() - b.q.sum()) * a.hy), float((a.r.sum() - b.r.sum()) * a.hy))
    rep["pass"] = bool(ok)
    return rep


# ---------------------------------------------------------------- sweeps

def convergence_sweep(cfg: ExperimentConfig, kind: str = "hjb", ns: Sequence[int] | None = None) -> list[dict]:
    """Errors against the closed form (1-D) for each n, with rates between neighbours.

    Failures are recorded in the row and the sweep continues.
    """
    ns = list(ns or cfg.sweep or [cfg.n])
    if cfg.dim != 1:
        return self_convergence_sweep(cfg, kind, ns)
    sol = exact1d.solve_quintet(cfg.model)
    rows = []
    for n in ns:
        row: dict[str, Any] = {"n": n, "L": eval_L_rule(cfg.L, n)}
        t0 = time.perf_counter()
        try:
            if kind == "hjb":
                vf, _ = run_hjb(cfg, n)
                row["l1"], row["l2"], row["linf"] = hjb_errors(vf, sol)
                row["threshold"] = float(vf.x_bar[0])
                row["threshold_error"] = abs(float(vf.x_bar[0]) - sol.x_bar)
                row["iterations"] = vf.iterations
            elif kind == "fp":
                xb = sol.x_bar if cfg.threshold_source in ("exact", "auto") else run_hjb(cfg, n)[0].x_bar[0]
                res, _ = run_fp(cfg, ThresholdProfile.constant(xb), n)
                row["l1"], row["l2"], row["linf"] = fp_errors(res.field, sol)
                row["q"], row["r"] = float(res.field.q[0]), float(res.field.r[0])
                row["mass_drift"] = res.max_mass_drift
                row["steps"] = res.steps
            else:
                raise ValueError(f"unknown sweep kind {kind!r}")
        except Exception as err:                  # keep going, report the row
            log.error("sweep row n=%d failed: %s", n, err)
            row["error"] = str(err)
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    _attach_rates(rows)
    return rows


def self_convergence_sweep(cfg: ExperimentConfig, kind: str, ns: Sequence[int]) -> list[dict]:
    """2-D: compare each level with the finest one by restriction onto the coarse grid."""
    ns = sorted(ns)
    fields = {}
    for n in ns:
        if kind == "hjb":
            fields[n] = run_hjb(cfg, n)[0].Phi
        else:
            vf, _ = run_hjb(cfg, n)
            fields[n] = run_fp(cfg, vf.profile(), n)[0].field.p
    ref_n = ns[-1]
    rows = []
    for n in ns[:-1]:
        r = ref_n // n
        if kind == "hjb":
            ref = fields[ref_n][::r, ::r]
            w = np.outer(vertex_weights(n), vertex_weights(n))
        else:
            ref = fields[ref_n].reshape(n, r, n, r).mean(axis=(1, 3))
            w = 1.0 / n**2
        l1, l2, li = error_norms(fields[n] - ref, w)
        rows.append({"n": n, "L": eval_L_rule(cfg.L, n), "l1": l1, "l2": l2, "linf": li})
    _attach_rates(rows)
    return rows


def _attach_rates(rows: list[dict]) -> None:
    for key in ("l1", "l2", "linf"):
        for a, b in zip(rows, rows[1:]):
            if key in a and key in b and b["n"] == 2 * a["n"]:
                b[f"CR_{key}"] = convergence_rates([a[key], b[key]])[0]


# ---------------------------------------------------------------- CSV

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: str | Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys])


def write_value_field(path: str | Path, vf: hjb.ValueField) -> Path:
    """Vertex table i,j,x,y,Phi,eta and a sibling ``*_thresholds.csv`` with one row per j."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "Phi", "eta"])
        for i, xv in enumerate(vf.x):
            for j, yv in enumerate(vf.y):
                w.writerow([i, j, _fmt(xv), _fmt(yv), _fmt(vf.Phi[i, j]), _fmt(vf.eta[i, j])])
    tpath = path.with_name(path.stem + "_thresholds.csv")
    with open(tpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "y", "x_bar", "threshold_type"])
        for j, yv in enumerate(vf.y):
            w.writerow([j, _fmt(yv), _fmt(vf.x_bar[j]), int(vf.is_threshold[j])])
    return tpath


def write_density(path: str | Path, f: fp.DensityField) -> None:
    """Cell rows (kind=cell) then atom rows tagged boundary=left (q) / right (r)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "i", "j", "x", "y", "value", "boundary"])
        xc, yc = f.x_cells, f.y_cells
        for i in range(f.p.shape[0]):
            for j in range(f.p.shape[1]):
                w.writerow(["cell", i + 1, j + 1, _fmt(xc[i]), _fmt(yc[j]), _fmt(f.p[i, j]), ""])
        for j in range(f.p.shape[1]):
            w.writerow(["atom", 0, j + 1, _fmt(0.0), _fmt(yc[j]), _fmt(f.q[j]), "left"])
        for j in range(f.p.shape[1]):
            w.writerow(["atom", f.p.shape[0] + 1, j + 1, _fmt(1.0), _fmt(yc[j]), _fmt(f.r[j]), "right"])


def read_density(path: str | Path) -> fp.DensityField:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells = [r for r in rows if r["kind"] == "cell"]
    n = max(int(r["i"]) for r in cells)
    ny = max(int(r["j"]) for r in cells)
    p = np.zeros((n, ny))
    q = np.zeros(ny)
    rr = np.zeros(ny)
    for r in cells:
        p[int(r["i"]) - 1, int(r["j"]) - 1] = float(r["value"])
    for r in rows:
        if r["kind"] == "atom":
            (q if r["boundary"] == "left" else rr)[int(r["j"]) - 1] = float(r["value"])
    return fp.DensityField(p, q, rr, 1.0 / n, 1.0 / ny if ny > 1 else 1.0)


def write_mass_history(path: str | Path, hist: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "mass"])
        for s, t, m in hist:
            w.writerow([s, _fmt(t), _fmt(m)])


def write_exact(path: str | Path, sol: exact1d.Exact1DSolution, points: int = 201) -> None:
    x = np.linspace(0.0, 1.0, points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "Phi", "p"])
        for xv in x:
            pv = exact1d.exact_density(xv, sol) if 0.0 < xv < 1.0 else float("nan")
            w.writerow([_fmt(xv), _fmt(exact1d.exact_value(xv, sol)), _fmt(pv)])


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- pipeline

def run_pipeline(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """Run the configured stages in order and write CSVs plus ``manifest.json``.

    Thresholds flow from exact1d or hjb into fp and mc according to
    ``threshold_source``. A failing stage raises StageError after the manifest
    is written.
    """
    out = Path(out_dir or cfg.out_dir or default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {"config": cfg.to_dict(), "seeds": {"mc": cfg.mc.seed},
                                "stages": {}, "residuals": {}, "timings": {}, "artifacts": {},
                                "python": platform.python_version(), "numpy": np.__version__}
    state: dict[str, Any] = {}
    failure = None
    for stage in cfg.pipeline:
        t0 = time.perf_counter()
        try:
            _run_stage(stage, cfg, out, state, manifest)
            manifest["stages"][stage] = "ok"
        except Exception as err:
            manifest["stages"][stage] = f"failed: {err}"
            failure = StageError(stage, err)
            break
        finally:
            manifest["timings"][stage] = round(time.perf_counter() - t0, 3)
    for name, path in list(manifest["artifacts"].items()):
        manifest["artifacts"][name] = {"file": Path(path).name, "sha256": _digest(Path(path))}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    if failure is not None:
        raise failure
    manifest["state"] = state
    return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _thresholds(cfg: ExperimentConfig, state: dict) -> ThresholdProfile:
    src = cfg.threshold_source
    if src == "exact" or (src == "auto" and "exact" in state and "hjb" not in state):
        return ThresholdProfile.constant(state["exact"].x_bar)
    if "hjb" in state:
        return state["hjb"].profile()
    if cfg.dim == 1 and src in ("auto", "exact"):
        state["exact"] = exact1d.solve_quintet(cfg.model)
        return ThresholdProfile.constant(state["exact"].x_bar)
    raise RuntimeError("no threshold available: run the exact1d or hjb stage first")


def _run_stage(stage: str, cfg: ExperimentConfig, out: Path, state: dict, manifest: dict) -> None:
    if stage == "exact1d":
        sol = exact1d.solve_quintet(cfg.model)
        state["exact"] = sol
        write_exact(out / "exact1d.csv", sol)
        manifest["artifacts"]["exact1d"] = out / "exact1d.csv"
        manifest["residuals"]["exact1d_system"] = float(np.max(np.abs(exact1d.quintet_residuals(sol))))
        manifest["exact1d"] = {k: getattr(sol, k) for k in ("x_bar", "Phi0", "Phi_plus0", "Phi1", "q", "r")}
    elif stage == "hjb":
        vf, _ = run_hjb(cfg)
        state["hjb"] = vf
        write_value_field(out / "hjb.csv", vf)
        manifest["artifacts"]["hjb"] = out / "hjb.csv"
        manifest["artifacts"]["hjb_thresholds"] = out / "hjb_thresholds.csv"
        manifest["residuals"]["hjb_final_change"] = vf.final_residual
        manifest["hjb"] = {"iterations": vf.iterations, "threshold_type": bool(vf.is_threshold.all())}
    elif stage == "fp":
        res, _ = run_fp(cfg, _thresholds(cfg, state))
        state["fp"] = res.field
        write_density(out / "fp.csv", res.field)
        write_mass_history(out / "fp_mass.csv", res.mass_history)
        manifest["artifacts"]["fp"] = out / "fp.csv"
        manifest["artifacts"]["fp_mass"] = out / "fp_mass.csv"
        manifest["residuals"]["fp_final_change"] = res.final_change
        manifest["residuals"]["fp_max_mass_drift"] = res.max_mass_drift
        manifest["fp"] = {"steps": res.steps}
    elif stage == "mc":
        est = run_mc(cfg, _thresholds(cfg, state))
        state["mc"] = est.field
        write_density(out / "mc.csv", est.field)
        manifest["artifacts"]["mc"] = out / "mc.csv"
        manifest["mc"] = {"samples": est.samples, "y_zero_preserved": est.y_zero_preserved}
    elif stage == "compare":
        ref = state.get("mc")
        if ref is None and "exact" in state and cfg.dim == 1:
            ref = exact_density_field(state["exact"], cfg.n)
        if "fp" not in state or ref is None:
            raise RuntimeError("compare needs an fp field and an mc field (or the 1-D closed form)")
        rep = compare_densities(state["fp"], ref, cfg.compare)
        state["compare"] = rep
        manifest["compare"] = rep
        if not rep["pass"]:
            raise CompareFailure(rep)


class CompareFailure(RuntimeError):
    def __init__(self, report: dict):
        super().__init__(f"densities differ beyond tolerance: {report}")
        self.report = report


def exact_density_field(sol: exact1d.Exact1DSolution, n: int) -> fp.DensityField:
    """Closed-form 1-D density sampled at cell centres, as a DensityField."""
    xc = (np.arange(n) + 0.5) / n
    return fp.DensityField(exact1d.exact_density(xc, sol)[:, None], np.array([sol.q]),
                           np.array([sol.r]), 1.0 / n, 1.0)

