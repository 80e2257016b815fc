"""Third-order WENO helpers along the last axis of uniformly spaced data.

``interpolate``: point values at arbitrary abscissae, blending the two quadratic
interpolants on the stencils {k-1, k, k+1} and {k, k+1, k+2} of the cell
[y_k, y_{k+1}] containing the target, in the spirit of the semi-Lagrangian WENO
of Carlini, Ferretti and Russo. Both quadratics are exact for affine data, so
the blend is too. Cells touching the ends fall back to linear interpolation.

``face_values``: upwind-biased WENO3 (Jiang-Shu) reconstruction of cell averages
at interior faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-6


@dataclass(frozen=True)
class InterpPlan:
    """Precomputed stencil positions for interpolating at fixed targets."""

    k: np.ndarray        # left node of the containing cell
    s: np.ndarray        # local coordinate in [0, 1]
    wide: np.ndarray     # True where both quadratic stencils fit
    cl: np.ndarray       # ideal weight of the left stencil
    cr: np.ndarray


def plan(targets: np.ndarray, h: float, m: int) -> InterpPlan:
    """Plan interpolation at ``targets`` on nodes 0, h, ..., (m-1) h."""
    t = np.clip(np.asarray(targets, dtype=float), 0.0, (m - 1) * h)
    k = np.clip(np.floor(t / h).astype(np.int64), 0, m - 2)
    s = t / h - k
    wide = (k >= 1) & (k + 2 <= m - 1)
    # linear weights reproducing the cubic through all four nodes
    cl = (2.0 - s) / 3.0
    cr = (1.0 + s) / 3.0
    return InterpPlan(k=k, s=s, wide=wide, cl=cl, cr=cr)


def interpolate(v: np.ndarray, p: InterpPlan, mode: str = "weno") -> np.ndarray:
    """Interpolate ``v`` (nodes on the last axis) at the planned targets."""
    k, s = p.k, p.s
    v0 = v[..., k]
    v1 = v[..., k + 1]
    lin = v0 + s * (v1 - v0)
    if mode == "linear" or not np.any(p.wide):
        return lin
    if mode != "weno":
        raise ValueError(f"unknown interpolation mode {mode!r}")
    km = np.where(p.wide, k - 1, k)
    kp = np.where(p.wide, k + 2, k + 1)
    vm = v[..., km]
    vp = v[..., kp]
    # quadratic on {k-1, k, k+1} and on {k, k+1, k+2}, local coordinate s
    d2l = vm - 2.0 * v0 + v1
    d2r = v0 - 2.0 * v1 + vp
    ql = lin + 0.5 * s * (s - 1.0) * d2l
    qr = lin + 0.5 * s * (s - 1.0) * d2r
    al = p.cl / (EPS + d2l * d2l) ** 2
    ar = p.cr / (EPS + d2r * d2r) ** 2
    out = (al * ql + ar * qr) / (al + ar)
    return np.where(p.wide, out, lin)


def face_values(v: np.ndarray, positive: bool = True) -> np.ndarray:
    """Upwind WENO3 values at the m-1 interior faces of m cells along the last axis.

    ``positive`` means the velocity points toward increasing index, so face
    k + 1/2 is reconstructed from the left. Faces without a full stencil use
    the first-order upwind value.
    """
    if not positive:
        return face_values(v[..., ::-1], True)[..., ::-1]
    m = v.shape[-1]
    out = v[..., :-1].copy()
    if m < 3:
        return out
    vm, v0, vp = v[..., :-2], v[..., 1:-1], v[..., 2:]
    p0 = -0.5 * vm + 1.5 * v0
    p1 = 0.5 * v0 + 0.5 * vp
    b0 = (v0 - vm) ** 2
    b1 = (vp - v0) ** 2
    a0 = (1.0 / 3.0) / (EPS + b0) ** 2
    a1 = (2.0 / 3.0) / (EPS + b1) ** 2
    out[..., 1:] = (a0 * p0 + a1 * p1) / (a0 + a1)
    return out
