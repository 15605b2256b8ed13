"""Grenander-type estimator: hull construction, variance pieces, Chernoff CIs."""

import math

import numpy as np
import pytest

import hetcurve as hc
from hetcurve.curve import big_gamma_onestep, integrate_big_gamma
from hetcurve.grenander import (CHERNOFF_Q975, chernoff_ci, default_neighbors,
                                estimate_gamma_prime, estimate_sigma2,
                                fit_grenander)

from conftest import random_level_one


def test_hull_below_curve(rng):
    for _ in range(15):
        l1 = random_level_one(rng, n=60)
        fit = fit_grenander(l1)
        curve = big_gamma_onestep(l1)
        grid = np.linspace(-1, 1, 301)
        vals = np.atleast_1d(curve(grid))
        assert np.all(fit.hull(grid) <= vals + 1e-12)
        # and below the left limits at the knots
        assert np.all(fit.hull(curve.knots) <= curve.left_values + 1e-12)


def test_derivative_nondecreasing(rng):
    for _ in range(15):
        l1 = random_level_one(rng, n=50)
        fit = fit_grenander(l1)
        grid = np.linspace(-1, 1, 200)
        assert np.all(np.diff(np.atleast_1d(fit(grid))) >= -1e-12)


def test_endpoints_pin_the_hull(rng):
    l1 = random_level_one(rng, n=40)
    fit = fit_grenander(l1)
    curve = big_gamma_onestep(l1)
    assert fit.hull.x[0] == -1.0 and fit.hull.x[-1] == 1.0
    assert fit.hull(1.0) == pytest.approx(curve(1.0), abs=1e-12)


def test_constrained_clips_to_unit_interval(rng):
    l1 = random_level_one(rng, n=30)
    fit = fit_grenander(l1, constrained=True)
    grid = np.linspace(-1, 1, 101)
    vals = np.atleast_1d(fit(grid))
    assert np.all((vals >= 0.0) & (vals <= 1.0))


def test_estimator_consistent_on_oracle_nuisance():
    dgm = hc.SimpleDgm(beta1=2.0)
    d = hc.draw(dgm, 20_000, 17)
    folds = hc.partition_folds(d.n, 2, 1)
    from hetcurve.nuisance import assemble_level_one
    l1 = assemble_level_one(d, folds, dgm.mu(0, d.w), dgm.mu(1, d.w), dgm.pi(d.w))
    fit = fit_grenander(l1)
    for a in (-0.1, 0.0, 0.1):
        truth = float(dgm.analytic_gamma(a))
        # cube-root rate: n^(-1/3) ~ 0.04 at this sample size
        assert float(fit(a)) == pytest.approx(truth, abs=0.06)


def test_default_neighbors():
    assert default_neighbors(10) == 10
    assert default_neighbors(100) == 20
    assert default_neighbors(10_000) == 100


def test_sigma2_nearest_neighbors_exact_small():
    l1 = random_level_one(np.random.default_rng(0), n=25)
    k = 5
    got = estimate_sigma2(l1, 0.0, k)
    denom = np.where(l1.a == 1, l1.pi_hat, 1 - l1.pi_hat)
    pseudo = (l1.y - l1.mu_hat) ** 2 / denom
    nearest = np.argsort(np.abs(l1.tau_hat - 0.0), kind="stable")[:k]
    assert got == pytest.approx(pseudo[nearest].mean())


def test_sigma2_k_range(rng):
    l1 = random_level_one(rng, n=10)
    with pytest.raises(ValueError):
        estimate_sigma2(l1, 0.0, 0)
    with pytest.raises(ValueError):
        estimate_sigma2(l1, 0.0, 11)


def test_gamma_prime_is_kde(rng):
    l1 = random_level_one(rng, n=200)
    h = 0.1
    got = estimate_gamma_prime(l1, 0.0, bandwidth=h)
    expected = np.mean(np.exp(-0.5 * ((0.0 - l1.tau_hat) / h) ** 2)) / (h * math.sqrt(2 * math.pi))
    assert got == pytest.approx(expected, rel=1e-12)
    # density integrates to ~1 over a wide grid
    grid = np.linspace(-3, 3, 2001)
    dens = [estimate_gamma_prime(l1, float(a), bandwidth=h) for a in grid]
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


def test_gamma_prime_degenerate_taus():
    l1_args = dict(index=[0, 1], fold=[1, 2], tau_hat=[0.2, 0.2], mu_hat=[0.5, 0.5],
                   pi_hat=[0.5, 0.5], phi_hat=[0.1, 0.1], y=[0, 1], a=[0, 1], K=2)
    from hetcurve.nuisance import LevelOneData
    l1 = LevelOneData(**l1_args)
    with pytest.raises(ValueError, match="bandwidth"):
        estimate_gamma_prime(l1, 0.0)
    assert estimate_gamma_prime(l1, 0.2, bandwidth=0.1) > 0


def test_chernoff_ci_formula(rng):
    l1 = random_level_one(rng, n=150)
    fit = fit_grenander(l1)
    lo, hi = chernoff_ci(fit, 0.1)
    sigma = math.sqrt(fit.sigma2_hat(0.1))
    slope = fit.gamma_prime_hat(0.1)
    half = CHERNOFF_Q975 * (2 * sigma * slope / math.sqrt(fit.n)) ** (2 / 3)
    assert hi - lo == pytest.approx(2 * half, rel=1e-12)
    assert (lo + hi) / 2 == pytest.approx(float(fit(0.1)), abs=1e-12)


def test_chernoff_ci_levels(rng):
    fit = fit_grenander(random_level_one(rng, n=50))
    with pytest.raises(ValueError, match="quantile"):
        chernoff_ci(fit, 0.0, level=0.9)
    lo95, hi95 = chernoff_ci(fit, 0.0, level=0.95)
    lo90, hi90 = chernoff_ci(fit, 0.0, level=0.9, quantile=0.8)
    assert hi90 - lo90 < hi95 - lo95


def test_chernoff_ci_constrained_clipped(rng):
    l1 = random_level_one(rng, n=20)
    fit = fit_grenander(l1, constrained=True)
    lo, hi = chernoff_ci(fit, 1.0)
    assert lo >= 0.0 and hi <= 1.0


def test_reintegration_matches_curve_integral(rng):
    # integral of the derivative over [-1, x] recovers hull height differences
    l1 = random_level_one(rng, n=45)
    fit = fit_grenander(l1)
    x, y = fit.hull.x, fit.hull.y
    levels = np.diff(y) / np.diff(x)
    rebuilt = y[0] + np.cumsum(levels * np.diff(x))
    assert np.allclose(rebuilt, y[1:], atol=1e-12)
    # hull at 1 never exceeds the curve's own antiderivative endpoint value
    curve = big_gamma_onestep(l1)
    assert fit.hull(1.0) <= curve(1.0) + 1e-12
    assert integrate_big_gamma(curve, -1.0, 1.0) >= fit.hull.y.min() - 1.0
