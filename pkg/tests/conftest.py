"""Shared fixtures and factories for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hetcurve.dataset import Dataset, partition_folds
from hetcurve.nuisance import LevelOneData, assemble_level_one


def random_level_one(rng: np.random.Generator, n: int = 80, K: int = 2,
                     tau_scale: float = 1.0) -> LevelOneData:
    """Random but internally consistent level-one data.

    Nuisance values are arbitrary (not fitted), but phi is the genuine
    pseudo-outcome of the drawn (y, a), so all algebraic identities that
    downstream estimators rely on hold exactly.
    """
    w = rng.normal(size=(n, 2))
    a = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    data = Dataset(w, a, y, ("w1", "w2"))
    folds = partition_folds(n, K, int(rng.integers(1 << 31)))
    center = rng.uniform(0.2, 0.8, n)
    spread = tau_scale * rng.uniform(0.0, 1.0, n)
    mu0 = np.clip(center - spread / 2.0, 0.0, 1.0)
    mu1 = np.clip(center + spread / 2.0, 0.0, 1.0)
    pi = rng.uniform(0.1, 0.9, n)
    return assemble_level_one(data, folds, mu0, mu1, pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def level_one(rng):
    return random_level_one(rng, n=120, K=3)
