"""Space-filling samplers over the unit cube."""

import warnings

import numpy as np
from scipy.stats import qmc

from .exceptions import DomainError


def sobol_points(n, d, seed=None, scramble=True):
    """Draw ``n`` Sobol points in [0, 1)^d.

    ``seed`` controls the scramble; with ``scramble=False`` the base
    sequence is returned.  Balance warnings for non-power-of-two ``n``
    are suppressed because callers use these points as generic
    space-filling designs, not for integration error bounds.
    """
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    engine = qmc.Sobol(d=d, scramble=scramble, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def lhs_sample(n, d, rng):
    """Latin hypercube sample of ``n`` points in [0, 1)^d.

    Each column is a random permutation of the ``n`` strata with a
    uniform offset inside each stratum, so ``floor(n * column)`` is a
    permutation of {0, ..., n-1}.
    """
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    cells = np.empty((n, d))
    for j in range(d):
        cells[:, j] = rng.permutation(n)
    return (cells + rng.uniform(0.0, 1.0, size=(n, d))) / n
