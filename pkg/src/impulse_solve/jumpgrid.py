"""Jump-size binning and the post-jump index tables shared by both solvers.

Vertex grid (value function): x_i = i h, y_j = j h, 0 <= i, j <= n.
Cell grid (density): cell (i, j), 1 <= i, j <= n, centred at ((i-1/2) h, (j-1/2) h);
arrays store cell i at position i - 1.

In 1-D mode the algae axis collapses: the value function lives on the single
vertex row y = 0 and the density on a single cell row of unit height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, detachment_factor, levy_bin_masses

# tolerance for recognising post-jump coordinates that sit exactly on a grid line
SNAP = 1e-9

RHO_PRESETS = {
    "sec31": lambda n: (1.0 / n) ** 1.5,
    "sec41": lambda n: 1.0 / n,
    "sec42": lambda n: 10.0 * n**-1.5,
}


def rho_preset(name: str, n: int) -> float:
    try:
        return RHO_PRESETS[name](n)
    except KeyError:
        raise ValueError(f"unknown rho preset {name!r}; choose from {sorted(RHO_PRESETS)}") from None


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: int
    rho: float
    dt: float
    dim: int = 2

    def __post_init__(self):
        if self.n < 2 or self.L < 1:
            raise ValueError("need n >= 2 and L >= 1")
        if not (self.rho > 0 and self.dt > 0):
            raise ValueError("rho and dt must be > 0")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def ny_vertices(self) -> int:
        return self.n + 1 if self.dim == 2 else 1

    @property
    def ny_cells(self) -> int:
        return self.n if self.dim == 2 else 1

    @property
    def hy(self) -> float:
        """Height of a density cell in y (the whole unit interval in 1-D mode)."""
        return self.h if self.dim == 2 else 1.0

    @classmethod
    def make(cls, n: int, L: int | str = "2n", rho: float | str = "sec41", dt: float | str = "2h",
             dim: int = 2) -> "GridSpec":
        """Build a spec from rules: L like ``"2n"`` or ``"n/2"``; rho a preset name; dt ``"2h"``/``"h"``."""
        L_val = eval_L_rule(L, n)
        rho_val = rho_preset(rho, n) if isinstance(rho, str) else float(rho)
        if isinstance(dt, str):
            dt_val = {"2h": 2.0 / n, "h": 1.0 / n}[dt]
        else:
            dt_val = float(dt)
        return cls(n=n, L=L_val, rho=rho_val, dt=dt_val, dim=dim)

    @property
    def x_vertices(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    @property
    def y_vertices(self) -> np.ndarray:
        return np.arange(self.ny_vertices) * self.h

    @property
    def x_cells(self) -> np.ndarray:
        return (np.arange(1, self.n + 1) - 0.5) * self.h

    @property
    def y_cells(self) -> np.ndarray:
        return (np.arange(1, self.ny_cells + 1) - 0.5) * self.hy


def eval_L_rule(rule: int | str, n: int) -> int:
    if isinstance(rule, (int, np.integer)):
        val = int(rule)
    else:
        s = str(rule).replace(" ", "")
        if s.endswith("n") and s[:-1].replace(".", "").isdigit():
            val = float(s[:-1]) * n
        elif s == "n":
            val = n
        elif s.startswith("n/"):
            val = n / float(s[2:])
        elif s.isdigit():
            val = int(s)
        else:
            raise ValueError(f"cannot parse L rule {rule!r}")
        if val != int(val):
            raise ValueError(f"L rule {rule!r} is not an integer at n={n}")
        val = int(val)
    if val < 1:
        raise ValueError("L must be >= 1")
    return val


def _floor(v: np.ndarray) -> np.ndarray:
    return np.floor(v + SNAP).astype(np.int64)


def _x_index(v: np.ndarray, rounding: str) -> np.ndarray:
    if rounding == "ceil":
        return np.ceil(v - SNAP).astype(np.int64)
    if rounding == "floor":
        return _floor(v)
    if rounding == "next":
        # vertex strictly to the right of the landing point
        return _floor(v) + 1
    raise ValueError(f"unknown x rounding {rounding!r}")


@dataclass(frozen=True)
class JumpGrid:
    """Jump bins and post-jump lookup tables (all indices 0-based).

    a[i, l]        vertex column hit from vertex i by jump l (>= 0)
    b[i, j, l]     vertex row hit from vertex (i, j) by jump l, in [0, ny_v - 1]
    alpha[i', l]   floor(n (xc_i' - z_l)); target cell column alpha + 1, or x = 0 if negative
    beta[i', j', l] target cell row (1-based) minus one, in [0, ny_c - 1]
    gamma[l]       floor(n (1 - z_l)); where the x = 1 atom lands
    omega[j', l]   row index for jumps out of the x = 1 atom
    """

    n: int
    L: int
    dim: int
    z: np.ndarray
    nu: np.ndarray
    lam_eff: float
    a: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    x_rounding: str = "ceil"


def build_jump_grid(spec: GridSpec, params: ModelParams, x_rounding: str = "ceil") -> JumpGrid:
    """Midpoint jump bins on (z_lo, z_hi) with exact masses and all index tables.

    ``x_rounding`` picks how the value-function lookup rounds a post-jump storage
    level that falls between vertices: ``"ceil"`` uses the vertex at or to the
    right, ``"floor"`` the one at or to the left, ``"next"`` the vertex strictly
    to the right.
    """
    zl, zh = params.z_lo, params.z_hi
    if not zh > zl:
        raise ValueError("z_hi must exceed z_lo")
    n, L = spec.n, spec.L
    edges = zl + (zh - zl) * np.arange(L + 1) / L
    z = zl + (zh - zl) * (np.arange(1, L + 1) - 0.5) / L
    nu = levy_bin_masses(edges, params)
    lam_eff = float(nu.sum())

    xv, yv = spec.x_vertices, spec.y_vertices
    xc, yc = spec.x_cells, spec.y_cells
    nyv, nyc = yv.size, yc.size
    scale_y = n if spec.dim == 2 else 1

    a = np.maximum(_x_index(n * (xv[:, None] - z[None, :]), x_rounding), 0)
    g_v = detachment_factor(xv[:, None], z[None, :], params)              # (n+1, L)
    b = _floor(scale_y * yv[None, :, None] * g_v[:, None, :])
    b = np.clip(b, 0, nyv - 1)

    alpha = _floor(n * (xc[:, None] - z[None, :]))
    g_c = detachment_factor(xc[:, None], z[None, :], params)              # (n, L)
    beta = np.clip(_floor(scale_y * yc[None, :, None] * g_c[:, None, :]), 0, nyc - 1)
    gamma = _floor(n * (1.0 - z))
    g_1 = detachment_factor(1.0, z, params)
    omega = np.clip(_floor(scale_y * yc[:, None] * g_1[None, :]), 0, nyc - 1)

    return JumpGrid(n=n, L=L, dim=spec.dim, z=z, nu=nu, lam_eff=lam_eff,
                    a=a.astype(np.int32), b=b.astype(np.int32), alpha=alpha.astype(np.int32),
                    beta=beta.astype(np.int32), gamma=gamma.astype(np.int32),
                    omega=omega.astype(np.int32), x_rounding=x_rounding)


def replenish_cell_count(x_bar: float, n: int) -> int:
    """Number of leftmost density cells inside the replenishment region, floor(x_bar n)."""
    if x_bar > 1.0:
        raise ValueError("threshold must not exceed 1")
    if x_bar < 0:
        return 0
    return int(math.floor(x_bar * n + SNAP))
