"""Model coefficients for the sediment-storage / algae-population control problem.

State space is the unit square: ``x`` is normalised sediment storage, ``y`` the
normalised algae population. Storage is flushed by a finite-activity pure-jump
process with Levy measure ``nu``; each flushing jump of size ``z`` also detaches
algae by the factor ``exp(-xi * min(x, z))``. Between jumps the population grows
logistically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """Raised when a state argument lies outside the unit interval."""


def _check_unit(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if np.any(arr < -DOMAIN_TOL) or np.any(arr > 1.0 + DOMAIN_TOL):
        raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
    return np.clip(arr, 0.0, 1.0)


def _scalar_or_array(arr: np.ndarray, like) -> Any:
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class SourceSpec:
    """Disutility of the algae population.

    kind is one of ``"linear"`` (S0 * y), ``"hinge"`` (4 * max(y - 0.5, 0)) or
    ``"table"`` (piecewise-linear through ``table`` points, which must start at
    (0, 0) and be nondecreasing).
    """

    kind: str = "linear"
    S0: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "hinge", "table"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "linear" and self.S0 < 0:
            raise ValueError("S0 must be nonnegative")
        if self.kind == "table":
            if not self.table or len(self.table) < 2:
                raise ValueError("table source needs at least two points")
            ys = np.array([p[0] for p in self.table], dtype=float)
            ss = np.array([p[1] for p in self.table], dtype=float)
            if ys[0] != 0.0 or ss[0] != 0.0:
                raise ValueError("table source must start at (0, 0)")
            if ys[-1] < 1.0 or np.any(np.diff(ys) <= 0):
                raise ValueError("table abscissae must increase and cover [0, 1]")
            if np.any(np.diff(ss) < 0):
                raise ValueError("table source must be nondecreasing")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "linear":
            return self.S0 * y
        if self.kind == "hinge":
            return 4.0 * np.maximum(y - 0.5, 0.0)
        pts = np.asarray(self.table, dtype=float)
        return np.interp(y, pts[:, 0], pts[:, 1])

    def is_zero(self) -> bool:
        if self.kind == "linear":
            return self.S0 == 0.0
        if self.kind == "table":
            return all(p[1] == 0.0 for p in self.table)
        return False


@dataclass(frozen=True)
class LevySpec:
    """Jump-size law. ``uniform``: lambda * 1{0<z<1} dz.
    ``truncexp``: lambda * 1{0<z<1} * theta * exp(-theta z) / (1 - exp(-theta)) dz."""

    kind: str = "uniform"
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "truncexp"):
            raise ValueError(f"unknown levy kind {self.kind!r}")
        if self.kind == "truncexp" and not (self.theta and self.theta > 0):
            raise ValueError("truncexp needs theta > 0")

    def cdf(self, z) -> np.ndarray:
        """Normalised cumulative mass on (0, z], for the density supported on (0, 1)."""
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            return z
        th = self.theta
        return -np.expm1(-th * z) / -math.expm1(-th)

    def inverse_cdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return u
        th = self.theta
        return -np.log1p(u * math.expm1(-th)) / th


@dataclass(frozen=True)
class ModelParams:
    """Continuous-model constants (rates in 1/day).

    ``lam`` is the total jump intensity; the JSON key is ``lambda``.
    """

    delta: float
    Lambda: float
    lam: float
    c: float
    d: float
    xi: float = 1.0
    G: float = 0.0
    source: SourceSpec = field(default_factory=lambda: SourceSpec("linear", 0.0))
    levy: LevySpec = field(default_factory=LevySpec)
    z_lo: float = 0.0
    z_hi: float = 1.0

    def __post_init__(self):
        for name in ("delta", "Lambda", "lam", "d", "xi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.c < 0 or self.G < 0:
            raise ValueError("c and G must be >= 0")
        if not 0 <= self.z_lo < self.z_hi:
            raise ValueError("need 0 <= z_lo < z_hi")
        if float(self.source(0.0)) != 0.0:
            raise ValueError("source must vanish at y = 0")

    @property
    def lam_eff(self) -> float:
        """Jump intensity retained after truncating the measure to (z_lo, z_hi)."""
        return levy_mass((self.z_lo, self.z_hi), self)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        if out["source"]["table"] is not None:
            out["source"]["table"] = [list(p) for p in out["source"]["table"]]
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelParams":
        data = _unflatten(dict(data))
        need = ["delta", "Lambda", "c", "d"]
        missing = [k for k in need if k not in data]
        if "lambda" not in data and "lam" not in data:
            missing.append("lambda")
        if missing:
            raise ValueError(f"missing model parameters: {missing}")
        kw = {k: data[k] for k in ("delta", "Lambda", "c", "d", "xi", "G", "z_lo", "z_hi") if k in data}
        kw["lam"] = data["lambda"] if "lambda" in data else data["lam"]
        if "source" in data:
            src = dict(data["source"])
            if src.get("table") is not None:
                src["table"] = tuple(tuple(p) for p in src["table"])
            kw["source"] = SourceSpec(**src)
        if "levy" in data:
            kw["levy"] = LevySpec(**data["levy"])
        return cls(**{k: (float(v) if isinstance(v, (int, float)) else v) for k, v in kw.items()})

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _unflatten(data: dict) -> dict:
    # accepts {"source.kind": ...} as well as nested {"source": {"kind": ...}}
    out: dict = {}
    for k, v in data.items():
        if "." in k:
            head, tail = k.split(".", 1)
            out.setdefault(head, {})[tail] = v
        elif isinstance(v, dict) and k in out:
            out[k].update(v)
        else:
            out[k] = v
    return out


def reduced_1d_params(**overrides) -> ModelParams:
    """Parameters of the exactly solvable no-algae case with a uniform jump law."""
    base = dict(delta=0.1, Lambda=0.25, lam=0.20, c=0.35, d=0.30, xi=1.0, G=0.0,
                source=SourceSpec("linear", 0.0), levy=LevySpec("uniform"), z_lo=0.0, z_hi=1.0)
    base.update(overrides)
    return ModelParams(**base)


def application_params(theta: float = 50.0, source: SourceSpec | None = None, **overrides) -> ModelParams:
    """Coupled sediment-algae configuration with a truncated-exponential jump law."""
    phys = PhysicalInputs()
    base = dict(delta=0.15, Lambda=0.15, lam=1.0, c=0.30, d=0.15, xi=xi_from_physics(phys), G=0.4,
                source=source or SourceSpec("linear", 1.0), levy=LevySpec("truncexp", theta),
                z_lo=0.0, z_hi=0.25)
    base.update(overrides)
    return ModelParams(**base)


@dataclass(frozen=True)
class PhysicalInputs:
    """Channel and sediment data behind the detachment coefficient and bedload formula.

    The bedload law is ``Q = a * max(b * Q_w**0.6 - tau_c, 0)**1.5``; the default
    coefficients are the rounded values for a 25 m wide, 0.001 slope,
    n = 0.03 channel with 5 mm sand. ``from_geometry`` recomputes them from
    Manning's formula (wide channel) and Meyer-Peter-Muller.
    """

    X_bar: float = 100.0 / 25.0
    kappa: float = 4.2
    width: float = 25.0
    slope: float = 0.001
    roughness: float = 0.03
    diameter: float = 0.005
    a: float = 0.0112
    b: float = 0.0176
    tau_c: float = 0.047

    def __post_init__(self):
        if not (self.X_bar > 0 and self.kappa > 0):
            raise ValueError("X_bar and kappa must be > 0")

    @classmethod
    def from_geometry(cls, width=25.0, slope=0.001, roughness=0.03, diameter=0.005,
                      rel_density=1.6, g=9.8, **kw) -> "PhysicalInputs":
        a = 8.0 * math.sqrt(rel_density * g * diameter**3)
        # depth = (n Q_w / (B sqrt(S)))^0.6, Shields number = depth * S / (s d)
        b = (roughness / (width * math.sqrt(slope))) ** 0.6 * slope / (rel_density * diameter)
        return cls(width=width, slope=slope, roughness=roughness, diameter=diameter, a=a, b=b, **kw)


def growth(y, params: ModelParams):
    """Logistic growth rate G y (1 - y)."""
    yy = _check_unit(y, "y")
    return _scalar_or_array(params.G * yy * (1.0 - yy), y)


def detachment_factor(x, z, params: ModelParams):
    """Surviving algae fraction exp(-xi min(x, z)) after a flushing jump of size z."""
    xx = _check_unit(x, "x")
    zz = np.asarray(z, dtype=float)
    if np.any(zz < 0):
        raise DomainError("jump size must be positive")
    out = np.exp(-params.xi * np.minimum(xx, zz))
    return float(out) if np.ndim(out) == 0 else out


def disutility(y, params: ModelParams):
    yy = _check_unit(y, "y")
    return _scalar_or_array(params.source(yy), y)


def levy_mass(interval: tuple[float, float], params: ModelParams) -> float:
    """Exact mass of the Levy measure on (z1, z2) intersected with its support (0, 1)."""
    z1, z2 = interval
    if not 0 <= z1 < z2:
        raise ValueError("need 0 <= z1 < z2")
    lo, hi = min(z1, 1.0), min(z2, 1.0)
    if hi <= lo:
        return 0.0
    lv = params.levy
    if lv.kind == "uniform":
        return params.lam * (hi - lo)
    th = lv.theta
    # exp(-th lo) - exp(-th hi), written to keep precision for large th
    num = math.exp(-th * lo) * -math.expm1(-th * (hi - lo))
    return params.lam * num / -math.expm1(-th)


def levy_bin_masses(edges: np.ndarray, params: ModelParams) -> np.ndarray:
    edges = np.clip(np.asarray(edges, dtype=float), 0.0, 1.0)
    lo, hi = edges[:-1], edges[1:]
    lv = params.levy
    if lv.kind == "uniform":
        return params.lam * (hi - lo)
    th = lv.theta
    return params.lam * np.exp(-th * lo) * -np.expm1(-th * (hi - lo)) / -math.expm1(-th)


def sample_jump_sizes(u, params: ModelParams) -> np.ndarray:
    """Inverse-CDF sampling from nu restricted to (z_lo, z_hi), normalised by lam_eff."""
    lv = params.levy
    c_lo, c_hi = lv.cdf(params.z_lo), lv.cdf(params.z_hi)
    return lv.inverse_cdf(c_lo + np.asarray(u, dtype=float) * (c_hi - c_lo))


def xi_from_physics(phys: PhysicalInputs) -> float:
    return phys.kappa * phys.X_bar


def sediment_discharge(Q_w, phys: PhysicalInputs | None = None):
    """Unit-width bedload rate (m^2/s) for water discharge Q_w (m^3/s)."""
    phys = phys or PhysicalInputs()
    q = np.asarray(Q_w, dtype=float)
    if np.any(q < 0):
        raise DomainError("discharge must be nonnegative")
    excess = np.maximum(phys.b * q**0.6 - phys.tau_c, 0.0)
    out = phys.a * excess**1.5
    return float(out) if np.ndim(out) == 0 else out
