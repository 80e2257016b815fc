"""Threshold policies x_bar(y): replenish fully at an observation iff x <= x_bar(y)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ThresholdProfile:
    """Thresholds at the algae ordinates ``y`` (negative value means never replenish).

    Values between nodes are linearly interpolated; a single node is a constant
    profile (the 1-D case).
    """

    y: np.ndarray
    x_bar: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        xb = np.atleast_1d(np.asarray(self.x_bar, dtype=float))
        if y.shape != xb.shape or y.ndim != 1:
            raise ValueError("y and x_bar must be 1-D arrays of equal length")
        if y.size > 1 and np.any(np.diff(y) <= 0):
            raise ValueError("y nodes must increase")
        if np.any(xb > 1.0):
            raise ValueError("thresholds must not exceed 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_bar", xb)

    @classmethod
    def constant(cls, x_bar: float) -> "ThresholdProfile":
        return cls(np.array([0.0]), np.array([x_bar]))

    def __call__(self, y):
        if self.y.size == 1:
            return np.full(np.shape(y), self.x_bar[0]) if np.ndim(y) else float(self.x_bar[0])
        out = np.interp(y, self.y, self.x_bar)
        return out if np.ndim(y) else float(out)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "x_bar"])
            for yy, xx in zip(self.y, self.x_bar):
                w.writerow([repr(float(yy)), repr(float(xx))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ThresholdProfile":
        """Read a ``y,x_bar`` table (extra columns such as ``j`` are ignored)."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "x_bar" not in rows[0]:
            raise ValueError(f"{path}: expected a column named x_bar")
        xb = np.array([float(r["x_bar"]) for r in rows])
        y = np.array([float(r.get("y", 0.0) or 0.0) for r in rows])
        return cls(y, xb)
