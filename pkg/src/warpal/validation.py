"""Array validation helpers used at public entry points.

Kept deliberately small: every helper either returns a float64 ndarray in
a canonical layout or raises a subclass of ValidationError.
"""

import numpy as np

from .exceptions import DomainError, ShapeError

#: Inputs may stick out of [0, 1] by at most this much before rejection;
#: anything within the slack is clamped onto the boundary.
UNIT_CUBE_SLACK = 1e-12


def as_matrix(X, name="X", n_cols=None):
    """Coerce to a 2-D float64 array with finite entries."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={X.ndim}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ShapeError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    if X.size and not np.all(np.isfinite(X)):
        raise DomainError(f"{name} contains non-finite entries")
    return X


def as_vector(y, name="y", size=None):
    """Coerce to a 1-D float64 array with finite entries."""
    y = np.asarray(y, dtype=float).ravel()
    if size is not None and y.size != size:
        raise ShapeError(f"{name} must have length {size}, got {y.size}")
    if y.size and not np.all(np.isfinite(y)):
        raise DomainError(f"{name} contains non-finite entries")
    return y


def check_unit_cube(X, name="X", slack=UNIT_CUBE_SLACK):
    """Verify entries lie in [0, 1] up to ``slack`` and clamp onto it."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X
    lo, hi = X.min(), X.max()
    if lo < -slack or hi > 1.0 + slack:
        raise DomainError(
            f"{name} must lie in the unit cube; range is [{lo:.6g}, {hi:.6g}]"
        )
    return np.clip(X, 0.0, 1.0)


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite scalar, got {value!r}")
    return value
