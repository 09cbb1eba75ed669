"""Shared fixtures and finite-difference helpers."""

import numpy as np
import pytest

from warpal.gp import Dataset, GPHyperparams


def central_diff(f, x, h=1e-6):
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def make_dataset(n=12, d=2, seed=0, noise=0.05):
    """Smooth synthetic regression data strictly inside the unit cube."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.02, 0.98, size=(n, d))
    y = np.sin(3.0 * X[:, 0]) + 0.5 * np.cos(5.0 * X).sum(axis=1)
    y = y + noise * rng.standard_normal(n)
    return Dataset(X, y)


@pytest.fixture
def dataset_2d():
    return make_dataset(n=12, d=2, seed=0)


@pytest.fixture
def hp_2d():
    return GPHyperparams(np.array([0.4, 0.3]), 1.3, 1e-3)
