"""Exact representation of the cross-fitted one-step antiderivative estimator.

The antiderivative estimator evaluated at any alpha is a fold-weighted mean of
``1{tau_hat <= alpha} * (alpha - phi_hat)``, which is piecewise affine in
alpha with a jump and a slope increase at every distinct tau_hat. Everything
downstream (Grenander hulls, spline inner products, influence-function
integrals) is computed exactly from that representation, with no grid
discretization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .nuisance import LevelOneData

__all__ = [
    "JumpLinearCurve",
    "GammaHatPlugin",
    "gamma_plugin",
    "big_gamma_onestep",
    "integrate_big_gamma",
    "eif_upsilon",
    "integrated_eif",
]


@dataclass(frozen=True)
class JumpLinearCurve:
    """Cadlag piecewise-linear function with jumps, on the domain [-1, 1].

    At each knot the function jumps from ``left_values[j]`` to ``values[j]``
    and continues with slope ``slopes[j]`` until the next knot. Before the
    first knot the function is identically zero.
    """

    knots: np.ndarray
    left_values: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if len(knots) == 0:
            raise ValueError("need at least one knot")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if knots[0] < -1 or knots[-1] > 1:
            raise ValueError("knots must lie within [-1, 1]")
        for name in ("knots", "left_values", "values", "slopes"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if len(arr) != len(knots):
                raise ValueError(f"{name} must have one entry per knot")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __call__(self, alpha):
        """Evaluate (right-continuously) at alpha in [-1, 1]."""
        alpha = np.asarray(alpha, dtype=float)
        idx = np.searchsorted(self.knots, alpha, side="right") - 1
        before = idx < 0
        idx_safe = np.clip(idx, 0, None)
        out = self.values[idx_safe] + self.slopes[idx_safe] * (alpha - self.knots[idx_safe])
        out = np.where(before, 0.0, out)
        return out if out.ndim else float(out)

    def left_limit(self, alpha):
        """Limit from the left at alpha (differs from __call__ only at knots)."""
        alpha = np.asarray(alpha, dtype=float)
        idx = np.searchsorted(self.knots, alpha, side="left") - 1
        at_knot = np.isin(alpha, self.knots)
        before = idx < 0
        idx_safe = np.clip(idx, 0, None)
        interior = self.values[idx_safe] + self.slopes[idx_safe] * (alpha - self.knots[idx_safe])
        knot_idx = np.searchsorted(self.knots, alpha, side="left")
        knot_idx = np.clip(knot_idx, 0, len(self.knots) - 1)
        out = np.where(at_knot, self.left_values[knot_idx], interior)
        out = np.where(before & ~at_knot, 0.0, out)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class GammaHatPlugin:
    """Right-continuous nondecreasing step function: fold-weighted ECDF of tau_hat."""

    knots: np.ndarray  # sorted distinct tau_hat values
    cum_weights: np.ndarray  # cumulative step heights, last entry 1 up to rounding

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        idx = np.searchsorted(self.knots, alpha, side="right") - 1
        out = np.where(idx < 0, 0.0, self.cum_weights[np.clip(idx, 0, None)])
        return out if out.ndim else float(out)


def _sorted_unique_aggregate(l1: "LevelOneData"):
    """Distinct sorted tau_hat values with aggregated weight and weight*phi sums."""
    order = np.argsort(l1.tau_hat, kind="stable")
    tau = l1.tau_hat[order]
    w = l1.weights[order]
    wphi = w * l1.phi_hat[order]
    knots, start = np.unique(tau, return_index=True)
    w_agg = np.add.reduceat(w, start)
    wphi_agg = np.add.reduceat(wphi, start)
    return knots, w_agg, wphi_agg


def gamma_plugin(l1: "LevelOneData") -> GammaHatPlugin:
    """Cross-fitted plug-in estimator: average over folds of each fold's ECDF of tau_hat."""
    if l1.n == 0:
        raise ValueError("level-one data is empty")
    knots, w_agg, _ = _sorted_unique_aggregate(l1)
    return GammaHatPlugin(knots, np.cumsum(w_agg))


def big_gamma_onestep(l1: "LevelOneData") -> JumpLinearCurve:
    """Cross-fitted one-step estimator of the antiderivative of the sublevel function.

    Exact curve with knots at the distinct tau_hat values: at each knot the
    jump is ``sum_i w_i (tau_i - phi_i)`` over tied records and the slope
    increases by the tied records' total weight, where w_i is the
    average-of-fold-means record weight ``1 / (K * n_k)``.
    """
    if l1.n == 0:
        raise ValueError("level-one data is empty")
    knots, w_agg, wphi_agg = _sorted_unique_aggregate(l1)
    cum_w = np.cumsum(w_agg)
    cum_wphi = np.cumsum(wphi_agg)
    values = knots * cum_w - cum_wphi
    prev_w = cum_w - w_agg
    prev_wphi = cum_wphi - wphi_agg
    left_values = knots * prev_w - prev_wphi
    return JumpLinearCurve(knots, left_values, values, cum_w)


def integrate_big_gamma(curve: JumpLinearCurve, a: float, b: float) -> float:
    """Exact integral of the piecewise-affine curve over [a, b] (jumps have measure zero)."""
    if a > b:
        raise ValueError("reversed integration bounds")
    if a < -1 or b > 1:
        raise ValueError("bounds must lie within [-1, 1]")
    if a == b:
        return 0.0
    inner = curve.knots[(curve.knots > a) & (curve.knots < b)]
    bounds = np.concatenate(([a], inner, [b]))
    left = bounds[:-1]
    widths = np.diff(bounds)
    g_left = np.atleast_1d(curve(left))
    idx = np.searchsorted(curve.knots, left, side="right") - 1
    slopes = np.where(idx < 0, 0.0, curve.slopes[np.clip(idx, 0, None)])
    return float(np.sum(g_left * widths + 0.5 * slopes * widths**2))


def eif_upsilon(tau_hat, phi_hat, alpha: float, big_gamma_at_alpha: float):
    """Efficient influence function of the antiderivative at alpha.

    ``1{tau_hat <= alpha} * (alpha - phi_hat) - big_gamma_at_alpha``; accepts
    scalars or arrays for ``tau_hat`` and ``phi_hat``.
    """
    if not -1 <= alpha <= 1:
        raise ValueError("alpha must lie in [-1, 1]")
    tau_hat = np.asarray(tau_hat, dtype=float)
    phi_hat = np.asarray(phi_hat, dtype=float)
    out = np.where(tau_hat <= alpha, alpha - phi_hat, 0.0) - big_gamma_at_alpha
    return out if out.ndim else float(out)


def integrated_eif(tau_hat, phi_hat, a: float, b: float, curve: JumpLinearCurve):
    """Closed form for the integral over [a, b] of the influence function.

    Equals ``0.5 * 1{tau <= b} * ((b - phi)^2 - (max(a, tau) - phi)^2)`` minus
    the integral of the curve over [a, b]; accepts scalars or arrays.
    """
    if a > b:
        raise ValueError("reversed integration bounds")
    tau_hat = np.asarray(tau_hat, dtype=float)
    phi_hat = np.asarray(phi_hat, dtype=float)
    lower = np.maximum(a, tau_hat)
    closed = 0.5 * np.where(tau_hat <= b, (b - phi_hat) ** 2 - (lower - phi_hat) ** 2, 0.0)
    out = closed - integrate_big_gamma(curve, a, b)
    return out if out.ndim else float(out)
