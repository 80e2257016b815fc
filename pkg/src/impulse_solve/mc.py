"""Monte-Carlo simulation of the controlled jump system under a threshold policy.

Time is discretised with step dt. In every step the population follows an
explicit Euler step of the logistic drift, a flushing jump occurs with
probability lam_eff dt and an observation with probability Lambda dt (jump
first when both occur). Step-wise Bernoulli events are drawn by geometric
skip-ahead, which has the same law and lets paths without drift jump from one
event to the next.

Random numbers come from a counter-based SplitMix64 stream keyed by
(seed, path index), so results do not depend on how paths are partitioned.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba as nb
import numpy as np

from .fp import DensityField
from .hjb import value_bound
from .model import ModelParams
from .policy import ThresholdProfile

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 1.0 / 9007199254740992.0

LEVY_UNIFORM, LEVY_TRUNCEXP = 0, 1
SRC_LINEAR, SRC_HINGE, SRC_TABLE = 0, 1, 2


@nb.njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def _uniform(state):
    """Advance state[0] and return a double in (0, 1)."""
    state[0] += _GOLDEN
    return ((_mix(state[0]) >> np.uint64(11)) + 0.5) * _TWO53


@nb.njit(cache=True)
def _seed_state(seed, path, state):
    state[0] = _mix(np.uint64(seed) * _GOLDEN + _mix(np.uint64(path) + np.uint64(1)))


@nb.njit(cache=True)
def _gap(state, log1m_p):
    """Steps until the next Bernoulli(p) success, counting the success step (>= 1)."""
    if log1m_p == 0.0:
        return np.int64(2) ** 62
    g = math.floor(math.log(_uniform(state)) / log1m_p)
    if g > 4.0e18:
        return np.int64(2) ** 62
    return np.int64(g) + 1


@nb.njit(cache=True)
def _jump_size(u, kind, theta, zlo, zhi):
    if kind == LEVY_UNIFORM:
        return zlo + u * (zhi - zlo)
    elo = math.exp(-theta * zlo)
    ehi = math.exp(-theta * zhi)
    return -math.log(elo - u * (elo - ehi)) / theta


@nb.njit(cache=True)
def _source(y, kind, s0, tab_y, tab_s):
    if kind == SRC_LINEAR:
        return s0 * y
    if kind == SRC_HINGE:
        return 4.0 * max(y - 0.5, 0.0)
    return np.interp(y, tab_y, tab_s)


@nb.njit(cache=True)
def _threshold(y, thr_y, thr_x):
    if thr_y.size == 1:
        return thr_x[0]
    return np.interp(y, thr_y, thr_x)


@nb.njit(cache=True)
def _run_paths(x0, y0, n_paths, path_offset, n_steps, burn_steps, dt, seed,
               lam_eff, Lam, G, xi, delta, c, d,
               levy_kind, theta, zlo, zhi,
               src_kind, s0, tab_y, tab_s,
               thr_y, thr_x,
               nx, ny, want_hist, want_obj):
    """Simulate paths; returns (hist p, hist q, hist r, objective per path, y-invariant flag).

    Histogram counts are weighted by steps spent in a state after burn-in.
    The running cost over step k uses the state at the start of the step and
    the discount weight exp(-delta t_k) (1 - exp(-delta dt)) / delta.
    """
    hp = np.zeros((nx, ny))
    hq = np.zeros(ny)
    hr = np.zeros(ny)
    obj = np.zeros(n_paths)
    ok = True
    log1m_j = math.log1p(-lam_eff * dt) if lam_eff > 0 else 0.0
    log1m_o = math.log1p(-Lam * dt) if Lam > 0 else 0.0
    edt = math.exp(-delta * dt)
    wstep = -math.expm1(-delta * dt) / delta
    drift = G > 0.0
    state = np.zeros(1, dtype=np.uint64)
    for ip in range(n_paths):
        _seed_state(seed, path_offset + ip, state)
        x = x0
        y = y0
        k = np.int64(0)
        nj = _gap(state, log1m_j) - 1          # index of the step with the next jump
        no = _gap(state, log1m_o) - 1
        acc = 0.0
        disc = 1.0                              # exp(-delta t_k)
        y_zero = y0 == 0.0
        while k < n_steps:
            nxt = min(nj, no, n_steps - 1)
            if drift and 0.0 < y < 1.0:
                nxt = k                         # step one at a time
            # steps k..nxt: no event before the end of step nxt
            m = nxt - k + 1
            run = 0.0
            if want_obj:
                # cost rate constant over the block when there is no drift
                rate = (1.0 if x == 0.0 else 0.0) + _source(y, src_kind, s0, tab_y, tab_s)
                if m == 1:
                    run = rate * disc * wstep
                else:
                    run = rate * disc * (1.0 - edt ** m) / delta
                acc += run
            if want_hist:
                lo = max(k, burn_steps)
                if nxt >= lo:
                    cnt = nxt - lo + 1
                    jy = min(int(y * ny), ny - 1)
                    if x == 0.0:
                        hq[jy] += cnt
                    elif x == 1.0:
                        hr[jy] += cnt
                    else:
                        ix = min(int(x * nx), nx - 1)
                        hp[ix, jy] += cnt
            disc *= edt**m
            k = nxt + 1
            # end of step nxt: drift, then jump, then observation
            if drift:
                y = y + G * y * (1.0 - y) * dt
                if y > 1.0:
                    y = 1.0
                elif y < 0.0:
                    y = 0.0
            if nxt == nj:
                z = _jump_size(_uniform(state), levy_kind, theta, zlo, zhi)
                y = y * math.exp(-xi * min(x, z))
                x = max(x - z, 0.0)
                nj = nxt + _gap(state, log1m_j)
            if nxt == no:
                if x <= _threshold(y, thr_y, thr_x) and x < 1.0:
                    if want_obj:
                        acc += disc * (c * (1.0 - x) + d)
                    x = 1.0
                no = nxt + _gap(state, log1m_o)
            if y_zero and y != 0.0:
                ok = False
        obj[ip] = acc
    return hp, hq, hr, obj, ok


@dataclass(frozen=True)
class EnsembleSpec:
    paths: int = 100_000
    dt: float = 0.02
    horizon: float | None = None      # total simulated days; default burn-in + window
    burn_in: float | None = None      # default 20 / min(delta, Lambda, lam)
    window: float = 100.0
    seed: int = 12345
    x0: float = 1.0
    y0: float = 0.5
    chunk: int = 50_000

    def resolved(self, params: ModelParams) -> tuple[float, float]:
        burn = self.burn_in if self.burn_in is not None else 20.0 / min(params.delta, params.Lambda, params.lam)
        horizon = self.horizon if self.horizon is not None else burn + self.window
        if horizon <= burn:
            raise ValueError("horizon must exceed the burn-in")
        return burn, horizon


def _model_args(params: ModelParams):
    lv, src = params.levy, params.source
    levy_kind = LEVY_UNIFORM if lv.kind == "uniform" else LEVY_TRUNCEXP
    theta = float(lv.theta or 0.0)
    if src.kind == "table":
        tab = np.asarray(src.table, dtype=float)
        tab_y, tab_s = tab[:, 0].copy(), tab[:, 1].copy()
    else:
        tab_y = tab_s = np.zeros(1)
    src_kind = {"linear": SRC_LINEAR, "hinge": SRC_HINGE, "table": SRC_TABLE}[src.kind]
    return (params.lam_eff, params.Lambda, params.G, params.xi, params.delta, params.c, params.d,
            levy_kind, theta, params.z_lo, min(params.z_hi, 1.0),
            src_kind, float(src.S0), tab_y, tab_s)


def _profile_args(th: ThresholdProfile):
    return np.ascontiguousarray(th.y, dtype=float), np.ascontiguousarray(th.x_bar, dtype=float)


def simulate_path(x0: float, y0: float, horizon: float, dt: float, params: ModelParams,
                  thresholds: ThresholdProfile, seed: int = 0, path: int = 0,
                  record: bool = True):
    """Single trajectory sampled at every step: arrays (t, x, y) and the discounted cost."""
    n = int(round(horizon / dt))
    out = _trace(x0, y0, n, dt, seed, path, *_model_args(params), *_profile_args(thresholds))
    t = np.arange(n + 1) * dt
    xs, ys, cost = out
    return t, xs, ys, cost


@nb.njit(cache=True)
def _trace(x0, y0, n_steps, dt, seed, path, lam_eff, Lam, G, xi, delta, c, d,
           levy_kind, theta, zlo, zhi, src_kind, s0, tab_y, tab_s, thr_y, thr_x):
    xs = np.empty(n_steps + 1)
    ys = np.empty(n_steps + 1)
    state = np.zeros(1, dtype=np.uint64)
    _seed_state(seed, path, state)
    log1m_j = math.log1p(-lam_eff * dt) if lam_eff > 0 else 0.0
    log1m_o = math.log1p(-Lam * dt) if Lam > 0 else 0.0
    nj = _gap(state, log1m_j) - 1
    no = _gap(state, log1m_o) - 1
    wstep = -math.expm1(-delta * dt) / delta
    x, y = x0, y0
    acc = 0.0
    disc = 1.0
    for k in range(n_steps):
        xs[k] = x
        ys[k] = y
        acc += ((1.0 if x == 0.0 else 0.0) + _source(y, src_kind, s0, tab_y, tab_s)) * disc * wstep
        disc *= math.exp(-delta * dt)
        y = min(max(y + G * y * (1.0 - y) * dt, 0.0), 1.0)
        if k == nj:
            z = _jump_size(_uniform(state), levy_kind, theta, zlo, zhi)
            y = y * math.exp(-xi * min(x, z))
            x = max(x - z, 0.0)
            nj = k + _gap(state, log1m_j)
        if k == no:
            if x <= _threshold(y, thr_y, thr_x) and x < 1.0:
                acc += disc * (c * (1.0 - x) + d)
                x = 1.0
            no = k + _gap(state, log1m_o)
    xs[n_steps] = x
    ys[n_steps] = y
    return xs, ys, acc


@dataclass
class DensityEstimate:
    field: DensityField
    samples: float
    y_zero_preserved: bool
    elapsed: float
    seed: int


def estimate_density(params: ModelParams, thresholds: ThresholdProfile, ens: EnsembleSpec,
                     nx: int, ny: int) -> DensityEstimate:
    """Time-averaged occupation after burn-in, binned on an nx-by-ny cell grid.

    Paths sitting exactly at x = 0 or x = 1 feed the atoms. With ny = 1 the
    row has unit height (the reduced model).
    """
    t0 = time.perf_counter()
    burn, horizon = ens.resolved(params)
    n_steps = int(round(horizon / ens.dt))
    burn_steps = int(round(burn / ens.dt))
    margs, pargs = _model_args(params), _profile_args(thresholds)
    hp = np.zeros((nx, ny))
    hq = np.zeros(ny)
    hr = np.zeros(ny)
    ok = True
    for start in range(0, ens.paths, ens.chunk):
        m = min(ens.chunk, ens.paths - start)
        a, b, cc, _, flag = _run_paths(ens.x0, ens.y0, m, start, n_steps, burn_steps, ens.dt,
                                       ens.seed, *margs, *pargs, nx, ny, True, False)
        hp += a
        hq += b
        hr += cc
        ok &= flag
    total = hp.sum() + hq.sum() + hr.sum()
    hx, hy = 1.0 / nx, 1.0 / ny
    fld = DensityField(hp / (total * hx * hy), hq / (total * hy), hr / (total * hy), hx, hy, horizon)
    return DensityEstimate(field=fld, samples=total, y_zero_preserved=bool(ok),
                           elapsed=time.perf_counter() - t0, seed=ens.seed)


@dataclass
class ObjectiveEstimate:
    mean: float
    stderr: float
    bias_bound: float
    paths: int
    horizon: float


def estimate_objective(x0: float, y0: float, params: ModelParams, thresholds: ThresholdProfile,
                       paths: int = 100_000, dt: float = 0.02, seed: int = 12345,
                       bias: float = 1e-4, horizon: float | None = None,
                       chunk: int = 200_000) -> ObjectiveEstimate:
    """Discounted cost of the threshold policy started at (x0, y0).

    The horizon defaults to the time after which the discounted tail, at most
    exp(-delta T) (1 + S(1)) / delta, is below ``bias``.
    """
    if not (0.0 <= x0 <= 1.0 and 0.0 <= y0 <= 1.0):
        raise ValueError("start point must lie in the unit square")
    bound = value_bound(params)
    if horizon is None:
        horizon = max(math.log(bound / bias) / params.delta, dt)
    n_steps = int(math.ceil(horizon / dt))
    margs, pargs = _model_args(params), _profile_args(thresholds)
    vals = []
    for start in range(0, paths, chunk):
        m = min(chunk, paths - start)
        *_, obj, _ = _run_paths(x0, y0, m, start, n_steps, n_steps, dt, seed, *margs, *pargs,
                                1, 1, False, True)
        vals.append(obj)
    v = np.concatenate(vals)
    tail = math.exp(-params.delta * n_steps * dt) * bound
    return ObjectiveEstimate(mean=float(v.mean()), stderr=float(v.std(ddof=1) / math.sqrt(v.size)),
                             bias_bound=tail, paths=int(v.size), horizon=n_steps * dt)
