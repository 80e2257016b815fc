r"""Closed-form solution of the reduced problem (no algae, uniform jump law).

With nu(dz) = lam 1{0<z<1} dz the value function is piecewise exponential with
a jump at x = 0 and the stationary law is

    q delta_0 + p(x) dx + r delta_1,

with p(x) = C1 exp(-alpha x) on (0, x_bar] and r exp(1 - x) on (x_bar, 1).
The free boundary x_bar solves a scalar equation f_L = f_R, found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams


class NoBracket(RuntimeError):
    """f_L - f_R keeps one sign on the search interval."""


class InvalidThreshold(ValueError):
    pass


EPS_BRACKET = 1e-9
BISECTION_STEPS = 200


def _require_uniform(params: ModelParams) -> None:
    if params.levy.kind != "uniform" or params.z_lo != 0.0 or params.z_hi < 1.0:
        raise ValueError("closed form needs the uniform jump law on (0, 1)")


def _rates(params: ModelParams):
    dl, Lm, lm = params.delta, params.Lambda, params.lam
    return lm / (dl + lm), lm / (dl + lm + Lm)


def threshold_sides(x_bar, params: ModelParams):
    """Both sides (f_L, f_R) of the scalar threshold equation."""
    beta, gamma = _rates(params)
    c, d = params.c, params.d
    K = c * params.Lambda / params.lam
    x = np.asarray(x_bar, dtype=float)
    E = np.exp(-beta * (1.0 - x))
    f_l = (c + d - c * x) * E / (1.0 - E)
    f_r = (1.0 / (params.delta + params.lam + params.Lambda) + K) * np.exp(gamma * x) - K
    return f_l, f_r


def solve_threshold(params: ModelParams) -> float:
    _require_uniform(params)

    def g(x):
        fl, fr = threshold_sides(x, params)
        return float(fl - fr)

    lo, hi = EPS_BRACKET, 1.0 - EPS_BRACKET
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise NoBracket(
            f"no sign change of f_L - f_R on [{lo}, {hi}] (values {glo:.3e}, {ghi:.3e}); "
            "a unique threshold is not guaranteed for these costs")
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= 4e-16:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Exact1DSolution:
    Phi0: float
    Phi_plus0: float
    Phi1: float
    x_bar: float
    beta: float
    gamma: float
    alpha: float
    q: float
    r: float
    C1: float
    params: ModelParams

    @property
    def K(self) -> float:
        return self.params.c * self.params.Lambda / self.params.lam


def fp_weights(x_bar: float, params: ModelParams) -> tuple[float, float, float]:
    """Atom weights and interior constant (q, r, C1) for a given threshold."""
    if x_bar >= 1.0:
        raise InvalidThreshold("threshold must be < 1 for a stationary law with an interior part")
    if x_bar < 0.0:
        raise InvalidThreshold("threshold must be >= 0")
    u = params.lam / params.Lambda
    alpha = params.lam / (params.lam + params.Lambda)
    e1 = math.exp(1.0 - x_bar)
    r = 1.0 / (u + e1)
    q = r * (u - e1 * math.expm1(alpha * x_bar))
    C1 = alpha * r * math.exp(1.0 - x_bar + alpha * x_bar)
    return q, r, C1


def solve_quintet(params: ModelParams, x_bar: float | None = None) -> Exact1DSolution:
    """Solve the anchor system given the root x_bar (computed when omitted)."""
    if x_bar is None:
        x_bar = solve_threshold(params)
    beta, gamma = _rates(params)
    dl, Lm, lm, c, d = params.delta, params.Lambda, params.lam, params.c, params.d
    E = math.exp(-beta * (1.0 - x_bar))
    D = (c + d - c * x_bar) / (1.0 - E)           # Phi0 - Phi1
    Phi0 = (1.0 + Lm * (c + d - D)) / dl
    Phi1 = Phi0 - D
    Phi_plus0 = Phi0 - 1.0 / (dl + lm + Lm)
    q, r, C1 = fp_weights(x_bar, params)
    return Exact1DSolution(Phi0=Phi0, Phi_plus0=Phi_plus0, Phi1=Phi1, x_bar=x_bar,
                           beta=beta, gamma=gamma, alpha=lm / (lm + Lm),
                           q=q, r=r, C1=C1, params=params)


def quintet_residuals(sol: Exact1DSolution) -> np.ndarray:
    """Residuals of the four anchor equations."""
    p = sol.params
    dl, Lm, lm, c, d = p.delta, p.Lambda, p.lam, p.c, p.d
    K, xb = sol.K, sol.x_bar
    cost = c * (1.0 - xb) + d
    return np.array([
        (dl + lm + Lm) * sol.Phi_plus0 - lm * sol.Phi0 - Lm * (sol.Phi1 + c + d),
        (dl + Lm) * sol.Phi0 - Lm * (sol.Phi1 + c + d) - 1.0,
        (sol.Phi_plus0 - sol.Phi0 - K) * math.exp(sol.gamma * xb) + sol.Phi0 - sol.Phi1 + K - cost,
        (sol.Phi0 - sol.Phi1) * (1.0 - math.exp(sol.beta * (xb - 1.0))) - cost,
    ])


def exact_value(x, sol: Exact1DSolution, side: str = "auto"):
    """Value function; ``side="left"`` evaluates the (0, x_bar] branch regardless of x."""
    xx = np.asarray(x, dtype=float)
    K = sol.K
    left = (sol.Phi_plus0 - sol.Phi0 - K) * np.exp(sol.gamma * xx) + sol.Phi0 + K
    right = -(sol.Phi0 - sol.Phi1) * np.exp(sol.beta * (xx - 1.0)) + sol.Phi0
    if side == "left":
        out = left
    elif side == "right":
        out = right
    else:
        out = np.where(xx <= sol.x_bar, left, right)
        out = np.where(xx == 0.0, sol.Phi0, out)
    return float(out) if np.ndim(out) == 0 else out


def exact_density(x, sol: Exact1DSolution):
    """Interior density p(x) for x in (0, 1); the atoms are ``sol.q`` and ``sol.r``."""
    xx = np.asarray(x, dtype=float)
    out = np.where(xx <= sol.x_bar, sol.C1 * np.exp(-sol.alpha * xx), sol.r * np.exp(1.0 - xx))
    return float(out) if np.ndim(out) == 0 else out


def density_mass(sol: Exact1DSolution) -> float:
    """q + r + integral of p, in closed form."""
    a, xb = sol.alpha, sol.x_bar
    left = sol.C1 * -math.expm1(-a * xb) / a if a > 0 else sol.C1 * xb
    right = sol.r * math.expm1(1.0 - xb)
    return sol.q + sol.r + left + right


def jump_integral(x, sol: Exact1DSolution):
    """int_0^1 Phi(x - min(x, z)) dz for the exact value function (Phi0 at x = 0)."""
    xx = np.atleast_1d(np.asarray(x, dtype=float))
    K, g, b, xb = sol.K, sol.gamma, sol.beta, sol.x_bar
    A = sol.Phi_plus0 - sol.Phi0 - K
    B = sol.Phi0 - sol.Phi1

    def prim_left(t):        # int_0^t of the left branch
        return A * np.expm1(g * t) / g + (sol.Phi0 + K) * t

    def prim_right(t):       # int_xb^t of the right branch
        return -B * (np.exp(b * (t - 1.0)) - np.exp(b * (xb - 1.0))) / b + sol.Phi0 * (t - xb)

    inner = np.where(xx <= xb, prim_left(np.minimum(xx, xb)),
                     prim_left(xb) + prim_right(np.maximum(xx, xb)))
    out = inner + (1.0 - xx) * sol.Phi0
    out = np.where(xx == 0.0, sol.Phi0, out)
    return out if np.ndim(x) else float(out[0])


def residual_hjb_1d(sol: Exact1DSolution, x=None) -> float:
    """Sup of the stationary HJB residual of the exact value function on a grid."""
    p = sol.params
    if x is None:
        x = np.linspace(0.0, 1.0, 1001)
    x = np.asarray(x, dtype=float)
    phi = exact_value(x, sol)
    phi1 = exact_value(1.0, sol)
    jump = p.lam * (phi - jump_integral(x, sol))
    replen = np.minimum(phi, phi1 + p.c * (1.0 - x) + p.d)
    res = p.delta * phi + jump + p.Lambda * (phi - replen) - (x == 0.0)
    return float(np.max(np.abs(res)))
