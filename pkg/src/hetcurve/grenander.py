"""Grenander-type estimator with Chernoff-limit pointwise confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curve import big_gamma_onestep
from .monotone import ConvexPiecewiseLinear, StepFunction, gcm, gcm_derivative
from .nuisance import LevelOneData

__all__ = [
    "GrenanderFit",
    "fit_grenander",
    "estimate_sigma2",
    "estimate_gamma_prime",
    "chernoff_ci",
    "CHERNOFF_Q975",
]

# 97.5% quantile of the Chernoff distribution; no other level ships built in.
CHERNOFF_Q975 = 0.9982


@dataclass(frozen=True)
class GrenanderFit:
    """Monotone estimate of the sublevel function with variance ingredients."""

    gamma_hat: StepFunction
    hull: ConvexPiecewiseLinear
    sigma2_hat: Callable[[float], float]
    gamma_prime_hat: Callable[[float], float]
    n: int
    constrained: bool

    def __call__(self, alpha):
        out = self.gamma_hat(alpha)
        if self.constrained:
            out = np.clip(out, 0.0, 1.0)
        return out if np.ndim(out) else float(out)


def _hull_points(l1: LevelOneData) -> np.ndarray:
    """GCM input: domain endpoints plus, at each knot, the lower of the two limits.

    Taking the min of the left limit and the value keeps the hull below the
    full cadlag curve even at downward jumps.
    """
    curve = big_gamma_onestep(l1)
    xs = np.concatenate(([-1.0], curve.knots, [1.0]))
    ys = np.concatenate((
        [curve(-1.0) if curve.knots[0] > -1 else np.minimum(curve.left_values[0], curve.values[0])],
        np.minimum(curve.left_values, curve.values),
        [curve(1.0)],
    ))
    return np.column_stack([xs, ys])


def default_neighbors(n: int) -> int:
    return min(n, max(20, math.ceil(math.sqrt(n))))


def fit_grenander(l1: LevelOneData, constrained: bool = False) -> GrenanderFit:
    """Derivative of the greatest convex minorant of the one-step antiderivative."""
    hull = gcm(_hull_points(l1))
    gamma_hat = gcm_derivative(hull)
    if constrained:
        gamma_hat = StepFunction(gamma_hat.breakpoints,
                                 np.clip(gamma_hat.levels, 0.0, 1.0), side="left")

    def sigma2_hat(alpha: float) -> float:
        return estimate_sigma2(l1, alpha, default_neighbors(l1.n))

    def gamma_prime_hat(alpha: float) -> float:
        return estimate_gamma_prime(l1, alpha)

    return GrenanderFit(gamma_hat=gamma_hat, hull=hull, sigma2_hat=sigma2_hat,
                        gamma_prime_hat=gamma_prime_hat, n=l1.n, constrained=constrained)


def estimate_sigma2(l1: LevelOneData, alpha: float, k: int) -> float:
    """Nearest-neighbor estimate of the conditional squared weighted residual.

    Averages ``(y - mu_hat)^2 / (pi_hat^a (1-pi_hat)^(1-a))`` over the k
    records whose tau_hat lie nearest to alpha, ties broken by record index.
    """
    if not 1 <= k <= l1.n:
        raise ValueError(f"neighbor count k={k} out of range [1, {l1.n}]")
    denom = np.where(l1.a == 1, l1.pi_hat, 1.0 - l1.pi_hat)
    pseudo = (l1.y - l1.mu_hat) ** 2 / denom
    order = np.lexsort((l1.index, np.abs(l1.tau_hat - alpha)))
    return float(pseudo[order[:k]].mean())


def silverman_bandwidth(values: np.ndarray) -> float:
    n = len(values)
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    return max(0.9 * min(sd, (q75 - q25) / 1.34) * n ** (-0.2), 1e-4)


def estimate_gamma_prime(l1: LevelOneData, alpha: float,
                         bandwidth: float | None = None) -> float:
    """Gaussian kernel density estimate of the tau_hat density at alpha."""
    tau = l1.tau_hat
    if len(tau) < 2:
        raise ValueError("density estimation needs at least 2 records")
    if bandwidth is None:
        if np.ptp(tau) == 0.0:
            raise ValueError("all tau_hat identical; supply an explicit bandwidth")
        bandwidth = silverman_bandwidth(tau)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    z = (alpha - tau) / bandwidth
    return float(np.mean(np.exp(-0.5 * z**2)) / (bandwidth * math.sqrt(2 * math.pi)))


def chernoff_ci(fit: GrenanderFit, alpha: float, level: float = 0.95,
                quantile: float | None = None) -> tuple[float, float]:
    """Pointwise CI from the cube-root Chernoff limit of the Grenander estimator.

    Half-width is ``q * (2 * sigma_hat * gamma_prime_hat / sqrt(n))^(2/3)``.
    Only the 95% two-sided level has a built-in Chernoff quantile; other
    levels require ``quantile``.
    """
    if quantile is None:
        if not math.isclose(level, 0.95):
            raise ValueError("no built-in Chernoff quantile for level "
                             f"{level}; supply one explicitly")
        quantile = CHERNOFF_Q975
    sigma = math.sqrt(max(fit.sigma2_hat(alpha), 0.0))
    slope = max(fit.gamma_prime_hat(alpha), 0.0)
    half = quantile * (2.0 * sigma * slope / math.sqrt(fit.n)) ** (2.0 / 3.0)
    est = float(fit(alpha))
    lower, upper = est - half, est + half
    if fit.constrained:
        lower, upper = max(lower, 0.0), min(upper, 1.0)
    return lower, upper
