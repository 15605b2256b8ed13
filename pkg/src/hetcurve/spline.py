"""Best first-order-spline approximation of the sublevel function.

Estimates the L2 projection of the sublevel function onto the space of
piecewise-linear splines on a fixed knot grid, from the one-step
antiderivative via integration by parts. Provides delta-method pointwise
intervals, a t-sup simultaneous band, a monotonicity-constrained quadratic
program, and rearrangement monotonization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from .curve import JumpLinearCurve, big_gamma_onestep, eif_upsilon, integrate_big_gamma, integrated_eif
from .monotone import pava, rearrange
from .nuisance import LevelOneData

__all__ = [
    "HatBasis",
    "SplineFit",
    "Band",
    "default_knots",
    "gram_matrix",
    "zeta_hat",
    "fit_spline",
    "evaluate_spline",
    "pointwise_ci",
    "tsup_band",
    "constrained_spline",
    "monotonize",
]

_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class HatBasis:
    """First-order spline basis on strictly increasing knots within [-1, 1].

    Basis function l is the hat peaking at knot l with support on the
    adjacent knot intervals; together they form a partition of unity on the
    knot span.
    """

    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if len(knots) < 2:
            raise ValueError("need at least 2 knots")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if knots[0] < -1 or knots[-1] > 1:
            raise ValueError("knots must lie within [-1, 1]")
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    @property
    def size(self) -> int:
        return len(self.knots)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def contains(self, alpha) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        return bool(np.all((alpha >= self.knots[0]) & (alpha <= self.knots[-1])))

    def evaluate(self, alpha) -> np.ndarray:
        """Matrix of basis function values, shape (len(alpha), number of knots)."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if not self.contains(alpha):
            raise ValueError("alpha outside the knot span")
        m = self.size
        out = np.zeros((len(alpha), m))
        seg = np.clip(np.searchsorted(self.knots, alpha, side="right") - 1, 0, m - 2)
        h = self.knots[seg + 1] - self.knots[seg]
        t = (alpha - self.knots[seg]) / h
        rows = np.arange(len(alpha))
        out[rows, seg] = 1.0 - t
        out[rows, seg + 1] = t
        return out


def default_knots(knot_min: float = -0.05, knot_max: float = 0.1,
                  n_knots: int = 10) -> HatBasis:
    """Equidistant knot grid; the default mirrors a 10-point grid on [-0.05, 0.1]."""
    return HatBasis(np.linspace(knot_min, knot_max, n_knots))


@dataclass(frozen=True)
class SplineFit:
    """Fitted spline coefficients with estimated coefficient covariance.

    ``theta_hat`` scales the sqrt(n)-normalized coefficient error, so
    pointwise standard errors carry an extra 1/sqrt(n).
    """

    basis: HatBasis
    zeta_hat: np.ndarray
    coefficients: np.ndarray
    theta_hat: np.ndarray
    n: int
    gram: np.ndarray = field(repr=False, default=None)

    def __call__(self, alpha):
        return evaluate_spline(self, alpha)


@dataclass(frozen=True)
class Band:
    """Estimate with lower/upper bounds on an evaluation grid."""

    grid: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    kind: str  # "pointwise" or "tsup"
    level: float
    degenerate: bool = False
    critical_value: float | None = None  # t-sup calibration constant, if any

    def __post_init__(self):
        for name in ("grid", "estimate", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.grid) == len(self.estimate) == len(self.lower) == len(self.upper)):
            raise ValueError("band vectors must have equal length")
        if np.any(self.lower > self.estimate + 1e-12) or np.any(self.upper < self.estimate - 1e-12):
            raise ValueError("band must bracket the estimate")


def gram_matrix(basis: HatBasis) -> np.ndarray:
    """Tridiagonal matrix of Lebesgue inner products of the hat functions (closed form)."""
    a = basis.knots
    h = np.diff(a)
    m = basis.size
    M = np.zeros((m, m))
    diag = np.zeros(m)
    diag[0] = h[0] / 3.0
    diag[-1] = h[-1] / 3.0
    if m > 2:
        diag[1:-1] = (a[2:] - a[:-2]) / 3.0
    M[np.arange(m), np.arange(m)] = diag
    off = h / 6.0
    M[np.arange(m - 1), np.arange(1, m)] = off
    M[np.arange(1, m), np.arange(m - 1)] = off
    return M


def zeta_hat(curve: JumpLinearCurve, basis: HatBasis) -> np.ndarray:
    """Inner products of the hat basis with the sublevel function, via integration by parts.

    Uses only antiderivative evaluations and exact interval integrals of the
    piecewise-affine curve, so no quadrature error enters.
    """
    a = basis.knots
    h = np.diff(a)
    ints = np.array([integrate_big_gamma(curve, a[l], a[l + 1]) for l in range(len(h))])
    avg = ints / h
    zeta = np.empty(basis.size)
    zeta[0] = -curve(a[0]) + avg[0]
    zeta[-1] = curve(a[-1]) - avg[-1]
    if basis.size > 2:
        zeta[1:-1] = -avg[:-1] + avg[1:]
    return zeta


def _solve_gram(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Direct tridiagonal solve of M x = rhs."""
    m = M.shape[0]
    ab = np.zeros((3, m))
    ab[0, 1:] = M[np.arange(m - 1), np.arange(1, m)]
    ab[1, :] = np.diag(M)
    ab[2, :-1] = M[np.arange(1, m), np.arange(m - 1)]
    return solve_banded((1, 1), ab, rhs)


def influence_matrix(l1: LevelOneData, basis: HatBasis,
                     curve: JumpLinearCurve | None = None) -> np.ndarray:
    """Per-record estimated influence vectors for the inner-product estimates.

    Returns an (n, L+2) matrix: component 0 combines the influence function
    at the left boundary knot with the first interval average; interior
    components difference adjacent interval averages; the last component
    combines the right boundary evaluation with the last interval average.
    """
    if curve is None:
        curve = big_gamma_onestep(l1)
    a = basis.knots
    h = np.diff(a)
    tau, phi = l1.tau_hat, l1.phi_hat
    avg = np.column_stack([
        integrated_eif(tau, phi, a[l], a[l + 1], curve) / h[l] for l in range(len(h))
    ])
    Z = np.empty((l1.n, basis.size))
    Z[:, 0] = -eif_upsilon(tau, phi, a[0], curve(a[0])) + avg[:, 0]
    Z[:, -1] = eif_upsilon(tau, phi, a[-1], curve(a[-1])) - avg[:, -1]
    if basis.size > 2:
        Z[:, 1:-1] = -avg[:, :-1] + avg[:, 1:]
    return Z


def fit_spline(l1: LevelOneData, basis: HatBasis) -> SplineFit:
    """Estimate the spline coefficients and their covariance from level-one data."""
    if l1.n == 0:
        raise ValueError("level-one data is empty")
    curve = big_gamma_onestep(l1)
    M = gram_matrix(basis)
    zeta = zeta_hat(curve, basis)
    try:
        coef = _solve_gram(M, zeta)
    except np.linalg.LinAlgError as err:  # unreachable for strictly ordered knots
        raise ValueError("singular Gram matrix") from err
    Z = influence_matrix(l1, basis, curve)
    sigma = (Z * l1.weights[:, None]).T @ Z
    Minv_sigma = _solve_gram(M, sigma)
    theta = _solve_gram(M, Minv_sigma.T).T
    theta = 0.5 * (theta + theta.T)
    return SplineFit(basis=basis, zeta_hat=zeta, coefficients=coef,
                     theta_hat=theta, n=l1.n, gram=M)


def evaluate_spline(fit: SplineFit, alpha):
    """Spline value at alpha (scalar or array); errors outside the knot span."""
    H = fit.basis.evaluate(alpha)
    out = H @ fit.coefficients
    return out if np.ndim(alpha) else float(out[0])


def _pointwise_sd(fit: SplineFit, alpha) -> np.ndarray:
    H = fit.basis.evaluate(alpha)
    var = np.einsum("ij,jk,ik->i", H, fit.theta_hat, H)
    return np.sqrt(np.maximum(var, 0.0))


def pointwise_ci(fit: SplineFit, alpha: float, level: float = 0.95) -> tuple[float, float]:
    """Delta-method pointwise interval: estimate +/- z * sd / sqrt(n)."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    est = evaluate_spline(fit, alpha)
    z = norm.ppf(0.5 + level / 2.0)
    half = z * float(_pointwise_sd(fit, [alpha])[0]) / np.sqrt(fit.n)
    return est - half, est + half


def _theta_sqrt(theta: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(theta)
    return vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def tsup_band(fit: SplineFit, grid, B: int, level: float = 0.95,
              seed: int = 0) -> Band:
    """Simultaneous band calibrated by the max standardized Gaussian deviation.

    Draws B multivariate normals with covariance ``theta_hat`` (counter-based
    generator, deterministic given seed), takes the empirical level-quantile
    of the grid maxima of |H' Z| / sd, and widens the pointwise standard
    errors accordingly. Grid points with sd below 1e-12 contribute zero
    width and are excluded from the maximum.
    """
    if B < 1000:
        raise ValueError("B must be at least 1000")
    grid = np.asarray(grid, dtype=float)
    est = np.atleast_1d(evaluate_spline(fit, grid))
    sd = _pointwise_sd(fit, grid)
    valid = sd >= _SIGMA_FLOOR
    if not valid.any():
        return Band(grid, est, est.copy(), est.copy(), kind="tsup",
                    level=level, degenerate=True)
    rng = np.random.Generator(np.random.Philox(seed))
    root = _theta_sqrt(fit.theta_hat)
    draws = rng.standard_normal((B, fit.basis.size)) @ root.T
    H = fit.basis.evaluate(grid[valid])
    T = np.max(np.abs(draws @ H.T) / sd[valid], axis=1)
    chat = float(np.quantile(T, level, method="higher"))
    half = np.where(valid, chat * sd / np.sqrt(fit.n), 0.0)
    return Band(grid, est, est - half, est + half, kind="tsup", level=level,
                critical_value=chat)


def pointwise_band(fit: SplineFit, grid, level: float = 0.95) -> Band:
    """Pointwise delta-method intervals evaluated on a grid."""
    grid = np.asarray(grid, dtype=float)
    est = np.atleast_1d(evaluate_spline(fit, grid))
    z = norm.ppf(0.5 + level / 2.0)
    half = z * _pointwise_sd(fit, grid) / np.sqrt(fit.n)
    return Band(grid, est, est - half, est + half, kind="pointwise", level=level)


def _power_lambda_max(M: np.ndarray, iters: int = 200) -> float:
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    for _ in range(iters):
        v = M @ v
        v /= np.linalg.norm(v)
    return float(v @ M @ v)


def constrained_spline(fit: SplineFit, tol: float = 1e-8,
                       max_iter: int = 100_000) -> np.ndarray:
    """Monotone [0,1]-bounded spline coefficients by projected gradient.

    Minimizes ``x' M x - 2 zeta' x`` over nondecreasing x in [0,1]^(L+2).
    The Euclidean projection onto the feasible set is pool-adjacent-violators
    followed by clipping. Terminates when the fixed-point (KKT) residual
    drops to ``tol``.
    """
    M = fit.gram if fit.gram is not None else gram_matrix(fit.basis)
    zeta = fit.zeta_hat
    step = 1.0 / _power_lambda_max(M)

    def project(x):
        return np.clip(pava(x), 0.0, 1.0)

    x = project(fit.coefficients)
    for _ in range(max_iter):
        grad = M @ x - zeta
        x_new = project(x - step * grad)
        residual = np.max(np.abs(x_new - x))
        x = x_new
        if residual <= tol:
            return x
    raise RuntimeError(f"projected gradient did not converge: residual {residual:.3e} > {tol}")


def monotonize(band: Band, grid=None) -> Band:
    """Rearrangement monotonization: sort estimate and bounds independently."""
    if grid is not None and not np.array_equal(np.asarray(grid, dtype=float), band.grid):
        raise ValueError("grid does not match the band's grid")
    return Band(band.grid, rearrange(band.estimate), rearrange(band.lower),
                rearrange(band.upper), kind=band.kind, level=band.level,
                degenerate=band.degenerate, critical_value=band.critical_value)
