"""Monotone-shape operators: greatest convex minorant, PAVA, rearrangement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core

__all__ = ["ConvexPiecewiseLinear", "StepFunction", "gcm", "gcm_derivative", "pava", "rearrange"]


@dataclass(frozen=True)
class ConvexPiecewiseLinear:
    """Convex piecewise-linear function given by hull vertices with increasing x."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("need at least 2 vertices with strictly increasing x")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.y) / np.diff(self.x)

    def __call__(self, alpha):
        return np.interp(alpha, self.x, self.y)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function with levels between consecutive breakpoints.

    ``levels[j]`` is the value on the interval between ``breakpoints[j]`` and
    ``breakpoints[j+1]``; ``side`` controls which endpoint each interval owns
    ('left' closes intervals on the right, matching a left derivative).
    """

    breakpoints: np.ndarray  # length m
    levels: np.ndarray  # length m - 1
    side: str = "left"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if len(lv) != len(bp) - 1:
            raise ValueError("need exactly one level per interval")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        side = "left" if self.side == "left" else "right"
        idx = np.searchsorted(self.breakpoints, alpha, side=side) - 1
        idx = np.clip(idx, 0, len(self.levels) - 1)
        out = self.levels[idx]
        return out if out.ndim else float(out)


def gcm(points: np.ndarray) -> ConvexPiecewiseLinear:
    """Greatest convex minorant of a finite point set, as its lower convex hull.

    Points sharing an x coordinate are merged to their minimum y first. The
    result passes through a subset of the input points and lies at or below
    every input point.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    order = np.argsort(pts[:, 0], kind="stable")
    x = pts[order, 0]
    y = pts[order, 1]
    ux, inverse = np.unique(x, return_inverse=True)
    if len(ux) < 2:
        raise ValueError("need at least 2 distinct x values")
    uy = np.full(len(ux), np.inf)
    np.minimum.at(uy, inverse, y)
    keep = _core.lower_hull_indices(np.ascontiguousarray(ux), np.ascontiguousarray(uy))
    return ConvexPiecewiseLinear(ux[keep], uy[keep])


def gcm_derivative(hull: ConvexPiecewiseLinear) -> StepFunction:
    """Left derivative of a convex piecewise-linear function.

    At a hull vertex the slope of the segment ending there applies; below the
    first interior breakpoint the first segment's slope is used.
    """
    return StepFunction(hull.x, hull.slopes, side="left")


def pava(values, weights=None) -> np.ndarray:
    """Weighted least-squares isotonic (nondecreasing) fit via pool-adjacent-violators."""
    y = np.ascontiguousarray(values, dtype=float)
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.ascontiguousarray(weights, dtype=float)
    if len(w) != len(y):
        raise ValueError("values and weights must have equal length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if len(y) == 0:
        return y.copy()
    return np.asarray(_core.pava_nondecreasing(y, w))


def rearrange(values_on_grid) -> np.ndarray:
    """Monotone rearrangement: the sorted values (same multiset, ascending)."""
    values = np.asarray(values_on_grid, dtype=float)
    if values.size == 0:
        raise ValueError("rearrange requires a nonempty input")
    return np.sort(values)
