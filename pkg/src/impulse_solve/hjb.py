r"""Semi-Lagrangian value iteration for the HJB equation on the vertex grid.

One sweep of the fixed-point map is

    Phi <- e^{-delta rho} Pi Phi + (1 - e^{-delta rho}) / delta
           * (N Phi - R Phi + 1{x = 0} + S(y)),

where Pi advects along y over pseudo-time rho, N is the piecewise-constant
jump operator and R the observation-time replenishment operator. Sweeps are
Jacobi style and start from Phi = 0.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import weno
from .jumpgrid import GridSpec, JumpGrid
from .model import ModelParams, disutility, growth
from .policy import ThresholdProfile

log = logging.getLogger(__name__)


class MaxIterations(RuntimeError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


class NonThresholdPolicy(UserWarning):
    """A row's replenishment set is not of the form {0, ..., i'}."""


@dataclass
class ValueField:
    Phi: np.ndarray              # (n+1, ny) vertex values
    eta: np.ndarray              # replenished amount 0 or 1 - x_i
    x_bar: np.ndarray            # per vertex row, -1 if never replenished
    is_threshold: np.ndarray     # per row, False where the replenish set is not a prefix
    x: np.ndarray
    y: np.ndarray
    iterations: int = 0
    final_residual: float = np.inf
    elapsed: float = 0.0
    history: list = field(default_factory=list)

    def profile(self) -> ThresholdProfile:
        return ThresholdProfile(self.y, self.x_bar)


def jump_matrix(grid: JumpGrid, ny: int) -> sp.csr_matrix:
    """Sparse S with (S Phi)_{ij} = sum_l nu_l Phi[a_il, b_ijl] on the flattened (i, j) field."""
    n1, L = grid.a.shape
    rows = np.repeat(np.arange(n1 * ny), L)
    cols = (grid.a[:, None, :].astype(np.int64) * ny + grid.b).ravel()
    vals = np.broadcast_to(grid.nu, (n1, ny, L)).ravel()
    S = sp.coo_matrix((vals, (rows, cols)), shape=(n1 * ny, n1 * ny)).tocsr()
    S.sum_duplicates()
    return S


def nonlocal_jump(Phi: np.ndarray, grid: JumpGrid, i: int | None = None, j: int | None = None):
    """-lam_eff Phi + sum_l nu_l Phi[a, b]; whole field when i, j are omitted."""
    if i is not None:
        jj = 0 if j is None else j
        s = sum(grid.nu[l] * Phi[grid.a[i, l], grid.b[i, jj, l]] for l in range(grid.L))
        return -grid.lam_eff * Phi[i, jj] + s
    gathered = Phi[grid.a[:, None, :], grid.b]            # (n+1, ny, L)
    return -grid.lam_eff * Phi + gathered @ grid.nu


def replenish_operator(Phi: np.ndarray, x: np.ndarray, params: ModelParams):
    """Lambda (Phi - min(Phi, Phi[n] + c (1 - x) + d)) and the minimising amount.

    Ties keep eta = 0; the last vertex (x = 1) never replenishes.
    """
    cost = params.c * (1.0 - x) + params.d
    cand = Phi[-1][None, :] + cost[:, None]
    act = cand < Phi
    act[-1, :] = False
    best = np.where(act, cand, Phi)
    eta = np.where(act, (1.0 - x)[:, None], 0.0)
    return params.Lambda * (Phi - best), eta


def advection_plan(spec: GridSpec, params: ModelParams) -> weno.InterpPlan | None:
    """Foot points y + f(y) rho of the vertex rows, or None when there is no drift."""
    if spec.dim == 1 or params.G == 0.0:
        return None
    y = spec.y_vertices
    foot = np.clip(y + growth(y, params) * spec.rho, 0.0, 1.0)
    return weno.plan(foot, spec.h, y.size)


def semi_lagrangian_advect(Phi: np.ndarray, plan: weno.InterpPlan | None, mode: str = "weno"):
    """Phi evaluated at the foot points along y (identity without drift)."""
    if plan is None:
        return Phi
    return weno.interpolate(Phi, plan, mode)


def detect_threshold(eta: np.ndarray, x: np.ndarray, warn: bool = True):
    """Per-row free boundary from the policy; returns (x_bar, is_threshold)."""
    act = eta > 0
    n1, ny = act.shape
    x_bar = np.full(ny, -1.0)
    ok = np.ones(ny, dtype=bool)
    for j in range(ny):
        idx = np.flatnonzero(act[:, j])
        if idx.size == 0:
            continue
        last = idx[-1]
        ok[j] = idx.size == last + 1
        x_bar[j] = 0.5 * (x[last] + x[last + 1])
    if warn and not ok.all():
        warnings.warn(f"non-threshold policy in rows {np.flatnonzero(~ok).tolist()}",
                      NonThresholdPolicy, stacklevel=2)
    return x_bar, ok


def value_iteration(spec: GridSpec, grid: JumpGrid, params: ModelParams, tol: float = 1e-12,
                    max_iter: int = 1_000_000, interp: str = "weno", Phi0: np.ndarray | None = None,
                    log_every: int = 0) -> ValueField:
    """Iterate the discrete fixed-point map until the sup change drops below ``tol``."""
    t0 = time.perf_counter()
    x, y = spec.x_vertices, spec.y_vertices
    n1, ny = x.size, y.size
    S = jump_matrix(grid, ny)
    plan = advection_plan(spec, params)
    e = np.exp(-params.delta * spec.rho)
    k = -np.expm1(-params.delta * spec.rho) / params.delta
    src = np.zeros((n1, ny))
    src[0, :] += 1.0
    src += disutility(y, params)[None, :]
    cost = params.c * (1.0 - x) + params.d
    Lam, lam_eff = params.Lambda, grid.lam_eff

    Phi = np.zeros((n1, ny)) if Phi0 is None else np.array(Phi0, dtype=float)
    diff = np.inf
    hist = []
    it = 0
    while it < max_iter:
        it += 1
        jump = (S @ Phi.ravel()).reshape(n1, ny)
        best = np.minimum(Phi, Phi[-1][None, :] + cost[:, None])
        best[-1] = Phi[-1]
        new = e * semi_lagrangian_advect(Phi, plan, interp) + k * (
            jump - lam_eff * Phi - Lam * (Phi - best) + src)
        diff = float(np.max(np.abs(new - Phi)))
        Phi = new
        if log_every and it % log_every == 0:
            hist.append((it, diff))
            log.debug("hjb iter %d change %.3e", it, diff)
        if diff < tol:
            break
    _, eta = replenish_operator(Phi, x, params)
    xb, ok = detect_threshold(eta, x)
    vf = ValueField(Phi=Phi, eta=eta, x_bar=xb, is_threshold=ok, x=x, y=y, iterations=it,
                    final_residual=diff, elapsed=time.perf_counter() - t0, history=hist)
    if diff >= tol:
        raise MaxIterations(f"value iteration not converged after {it} sweeps (change {diff:.3e})", vf)
    log.info("hjb n=%d L=%d converged in %d sweeps (%.1fs)", spec.n, spec.L, it, vf.elapsed)
    return vf


def value_bound(params: ModelParams) -> float:
    return (1.0 + float(disutility(1.0, params))) / params.delta
