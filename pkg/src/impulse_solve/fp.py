r"""Finite-volume Fokker-Planck solver with boundary atoms.

Unknowns: cell densities p[i, j] (n x ny), and atom densities q[j] on x = 0 and
r[j] on x = 1, per unit length in y. Total mass

    M = sum_j q_j hy + sum_{ij} p_ij hx hy + sum_j r_j hy.

Jumps, losses and replenishment are linear and assembled once into a sparse
generator for a fixed threshold profile; the y-advection flux is applied
separately (first-order upwind or WENO3 face values) with zero flux through
y = 0 and y = 1. Time stepping is forward Euler.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import weno
from .jumpgrid import GridSpec, JumpGrid, replenish_cell_count
from .model import ModelParams, growth
from .policy import ThresholdProfile

log = logging.getLogger(__name__)


class StabilityViolation(ValueError):
    pass


class MaxSteps(RuntimeError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


@dataclass
class DensityField:
    p: np.ndarray      # (n, ny)
    q: np.ndarray      # (ny,)
    r: np.ndarray      # (ny,)
    hx: float
    hy: float
    t: float = 0.0

    @property
    def mass(self) -> float:
        return float((self.q.sum() + self.r.sum()) * self.hy + self.p.sum() * self.hx * self.hy)

    @property
    def x_cells(self) -> np.ndarray:
        return (np.arange(self.p.shape[0]) + 0.5) * self.hx

    @property
    def y_cells(self) -> np.ndarray:
        return (np.arange(self.p.shape[1]) + 0.5) * self.hy

    def copy(self) -> "DensityField":
        return DensityField(self.p.copy(), self.q.copy(), self.r.copy(), self.hx, self.hy, self.t)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.p.ravel(), self.q, self.r])


@dataclass
class StationaryResult:
    field: DensityField
    steps: int
    final_change: float
    max_mass_drift: float
    mass_history: list = field(default_factory=list)
    elapsed: float = 0.0


def uniform_start(spec: GridSpec) -> DensityField:
    """p = 1 on the interior, no atoms (unit mass)."""
    n, ny = spec.n, spec.ny_cells
    return DensityField(np.ones((n, ny)), np.zeros(ny), np.zeros(ny), spec.h, spec.hy)


def corner_start(spec: GridSpec) -> DensityField:
    """All mass in the top-right cell."""
    f = uniform_start(spec)
    f.p[:] = 0.0
    f.p[-1, -1] = 1.0 / (f.hx * f.hy)
    return f


@dataclass(frozen=True)
class ReplenishRule:
    """Replenished cell counts k_j and rows where the policy is active (x_bar >= 0)."""

    k: np.ndarray
    active: np.ndarray

    @classmethod
    def from_profile(cls, profile: ThresholdProfile, spec: GridSpec) -> "ReplenishRule":
        xb = np.atleast_1d(profile(spec.y_cells))
        k = np.array([replenish_cell_count(v, spec.n) for v in xb], dtype=np.int64)
        return cls(k=k, active=xb >= 0.0)

    def mask(self, n: int) -> np.ndarray:
        """chi{i <= k_j} on the (n, ny) cell array (i 1-based)."""
        return (np.arange(1, n + 1)[:, None] <= self.k[None, :]) & self.active[None, :]


class JumpOperator:
    """Sparse maps for jump inflows: p->p, r->p, p->q, r->q."""

    def __init__(self, grid: JumpGrid, spec: GridSpec):
        n, ny, L = spec.n, spec.ny_cells, grid.L
        hx = spec.h
        nu = grid.nu
        src_p = np.broadcast_to((np.arange(n)[:, None] * ny + np.arange(ny)[None, :])[:, :, None],
                                (n, ny, L))
        alpha = np.broadcast_to(grid.alpha[:, None, :], (n, ny, L))
        nu3 = np.broadcast_to(nu, (n, ny, L))
        inside = alpha >= 0
        tgt = alpha.astype(np.int64) * ny + grid.beta
        self.P2P = sp.csr_matrix((nu3[inside], (tgt[inside], src_p[inside])), shape=(n * ny, n * ny))
        self.P2Q = sp.csr_matrix((nu3[~inside] * hx, (grid.beta[~inside], src_p[~inside])),
                                 shape=(ny, n * ny))
        gam = np.broadcast_to(np.minimum(grid.gamma, n - 1)[None, :], (ny, L))
        src_r = np.broadcast_to(np.arange(ny)[:, None], (ny, L))
        nu2 = np.broadcast_to(nu, (ny, L))
        g_in = gam >= 0
        tgt_r = gam.astype(np.int64) * ny + grid.omega
        self.R2P = sp.csr_matrix((nu2[g_in] / hx, (tgt_r[g_in], src_r[g_in])), shape=(n * ny, ny))
        self.R2Q = sp.csr_matrix((nu2[~g_in], (grid.omega[~g_in], src_r[~g_in])), shape=(ny, ny))
        self.lam_eff = grid.lam_eff
        self.shape = (n, ny)


def jump_inflow(f: DensityField, op: JumpOperator):
    """Interior inflow J (n, ny) and inflow J_L (ny,) into the x = 0 atom."""
    pv = f.p.ravel()
    J = (op.P2P @ pv + op.R2P @ f.r).reshape(f.p.shape)
    JL = op.P2Q @ pv + op.R2Q @ f.r
    return J, JL


def inflow_balance(f: DensityField, op: JumpOperator) -> float:
    """sum J_L hy + sum J hx hy - lam_eff (sum p hx hy + sum r hy); zero by construction."""
    J, JL = jump_inflow(f, op)
    inflow = JL.sum() * f.hy + J.sum() * f.hx * f.hy
    outflow = op.lam_eff * (f.p.sum() * f.hx * f.hy + f.r.sum() * f.hy)
    return float(inflow - outflow)


def refill_mass(f: DensityField, rule: ReplenishRule) -> np.ndarray:
    """m_j = q_j + sum_{i <= k_j} p_ij hx on active rows, 0 elsewhere."""
    mask = rule.mask(f.p.shape[0])
    return np.where(rule.active, f.q + (f.p * mask).sum(axis=0) * f.hx, 0.0)


def replenish_balance(f: DensityField, rule: ReplenishRule, Lambda: float) -> float:
    """Mass removed by observation-time replenishment minus mass added to the x = 1 atom."""
    mask = rule.mask(f.p.shape[0])
    removed = Lambda * ((f.q * rule.active).sum() * f.hy + (f.p * mask).sum() * f.hx * f.hy)
    added = Lambda * refill_mass(f, rule).sum() * f.hy
    return float(removed - added)


def face_speeds(spec: GridSpec, params: ModelParams) -> np.ndarray:
    """Speeds for the ny-1 interior faces: face j (top of cell j) uses f at the centre of cell j."""
    if spec.dim == 1:
        return np.zeros(0)
    return np.asarray(growth(spec.y_cells[:-1], params), dtype=float)


def upwind_fluxes(f: DensityField, speeds: np.ndarray, mode: str = "upwind"):
    """Face fluxes (F_p, F_q, F_r) on all ny+1 faces; the first and last are zero."""
    ny = f.p.shape[1]
    Fp = np.zeros((f.p.shape[0], ny + 1))
    Fq = np.zeros(ny + 1)
    Fr = np.zeros(ny + 1)
    if ny < 2 or not np.any(speeds):
        return Fp, Fq, Fr
    pos = speeds >= 0
    for arr, out in ((f.p, Fp), (f.q, Fq), (f.r, Fr)):
        if mode == "weno":
            vl = weno.face_values(arr, True)
            vr = weno.face_values(arr, False)
        elif mode == "upwind":
            vl, vr = arr[..., :-1], arr[..., 1:]
        else:
            raise ValueError(f"unknown flux mode {mode!r}")
        out[..., 1:-1] = speeds * np.where(pos, vl, vr)
    return Fp, Fq, Fr


def assemble_generator(spec: GridSpec, op: JumpOperator, params: ModelParams,
                       rule: ReplenishRule) -> sp.csr_matrix:
    """Linear part (jumps, jump losses, replenishment) on the packed vector [p, q, r]."""
    n, ny = spec.n, spec.ny_cells
    hx, Lam, lam = spec.h, params.Lambda, op.lam_eff
    mask = rule.mask(n).ravel().astype(float)
    act = rule.active.astype(float)
    Iq = sp.identity(ny, format="csr")
    # m_j as a map from (p, q)
    rows = np.tile(np.arange(ny), n)
    Mp = sp.csr_matrix((mask * hx, (rows, np.arange(n * ny))), shape=(ny, n * ny))
    Mq = sp.diags(act)
    A = sp.bmat([
        [op.P2P - sp.diags(Lam * mask + lam), None, op.R2P],
        [op.P2Q, -Lam * Mq, op.R2Q],
        [Lam * Mp, Lam * Mq, -lam * Iq],
    ], format="csr")
    return A


def check_stability(spec: GridSpec, params: ModelParams, lam_eff: float) -> float:
    fmax = float(np.max(face_speeds(spec, params), initial=0.0))
    cfl = spec.dt * (lam_eff + params.Lambda + fmax / spec.h)
    if cfl > 1.0 + 1e-12:
        raise StabilityViolation(
            f"dt={spec.dt:g} violates dt (lam + Lambda + max f / h) <= 1 (value {cfl:.4f})")
    return cfl


def euler_step(f: DensityField, A: sp.csr_matrix, speeds: np.ndarray, dt: float,
               flux_mode: str = "upwind") -> DensityField:
    n, ny = f.p.shape
    v = f.pack()
    dv = A @ v
    Fp, Fq, Fr = upwind_fluxes(f, speeds, flux_mode)
    out = v + dt * dv
    p = out[: n * ny].reshape(n, ny) - dt / f.hy * np.diff(Fp, axis=1)
    q = out[n * ny: n * ny + ny] - dt / f.hy * np.diff(Fq)
    r = out[n * ny + ny:] - dt / f.hy * np.diff(Fr)
    return DensityField(p, q, r, f.hx, f.hy, f.t + dt)


def solve_stationary(spec: GridSpec, grid: JumpGrid, params: ModelParams,
                     thresholds: ThresholdProfile, tol: float = 1e-10, max_steps: int = 10_000_000,
                     flux_mode: str = "upwind", start: DensityField | None = None,
                     per_unit_time: bool = False, record_every: int = 100) -> StationaryResult:
    """Step forward until the per-step change of p, q and r is below ``tol`` everywhere.

    ``per_unit_time`` divides the change by dt before the test.
    """
    t0 = time.perf_counter()
    op = JumpOperator(grid, spec)
    check_stability(spec, params, op.lam_eff)
    rule = ReplenishRule.from_profile(thresholds, spec)
    A = assemble_generator(spec, op, params, rule)
    speeds = face_speeds(spec, params)
    f = uniform_start(spec) if start is None else start.copy()
    n, ny = f.p.shape
    dt = spec.dt
    M0 = f.mass
    v = f.pack()
    hist = [(0, 0.0, M0)]
    drift = 0.0
    change = np.inf
    step = 0
    linear = ny == 1 or not np.any(speeds)
    # forward Euler as one sparse map when there is no flux
    B = (sp.identity(v.size, format="csr") + dt * A) if linear else None
    w = np.concatenate([np.full(n * ny, f.hx * f.hy), np.full(2 * ny, f.hy)])
    while step < max_steps:
        step += 1
        if linear:
            nv = B @ v
        else:
            cur = DensityField(v[: n * ny].reshape(n, ny), v[n * ny: n * ny + ny], v[n * ny + ny:],
                               f.hx, f.hy)
            nxt = euler_step(cur, A, speeds, dt, flux_mode)
            nv = nxt.pack()
        change = float(np.max(np.abs(nv - v)))
        if per_unit_time:
            change /= dt
        v = nv
        M = float(w @ v)
        drift = max(drift, abs(M - M0))
        if step % record_every == 0:
            hist.append((step, step * dt, M))
        if change < tol:
            break
    if hist[-1][0] != step:
        hist.append((step, step * dt, float(w @ v)))
    out = DensityField(v[: n * ny].reshape(n, ny).copy(), v[n * ny: n * ny + ny].copy(),
                       v[n * ny + ny:].copy(), f.hx, f.hy, f.t + step * dt)
    res = StationaryResult(field=out, steps=step, final_change=change, max_mass_drift=drift,
                           mass_history=hist, elapsed=time.perf_counter() - t0)
    if change >= tol:
        raise MaxSteps(f"no stationary state after {step} steps (change {change:.3e})", res)
    log.info("fp n=%d L=%d stationary after %d steps (%.1fs)", spec.n, spec.L, step, res.elapsed)
    return res
