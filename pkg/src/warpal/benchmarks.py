"""Synthetic test functions, affinely rescaled onto the unit cube.

Each benchmark owns a clean evaluation on its natural domain plus an
analytic gradient, and is queried through unit-cube coordinates:
``evaluate(U)`` maps u -> lo + u*(hi - lo) before calling the clean
function, and ``gradient(U)`` chains the same affine map.  The
``gpsample`` family draws one Matern 5/2 prior sample path on a fixed
quasi-random grid and interpolates it by noise-free conditioning, so the
same seed always yields the same deterministic function.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from . import kernels
from .exceptions import DomainError
from .gp import GPHyperparams, chol_with_jitter
from .sampling import sobol_points
from .seeding import child_rng
from .validation import as_matrix, check_unit_cube

SMOOTH_BOX_STEEPNESS = 7.0
SMOOTH_BOX_START = -0.5

GPSAMPLE_GRID_SIZE = 256


@dataclass(frozen=True)
class Benchmark:
    """A named function on a box domain with unit-cube access."""

    name: str
    n_dims: int
    lower: np.ndarray
    upper: np.ndarray
    clean_fn: callable
    clean_grad: callable = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.size != self.n_dims or upper.size != self.n_dims:
            raise DomainError("domain bounds must have one entry per dimension")
        if np.any(upper <= lower):
            raise DomainError("each upper bound must exceed its lower bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def span(self):
        return self.upper - self.lower

    def to_natural(self, U):
        U = check_unit_cube(as_matrix(U, "U", n_cols=self.n_dims), "U")
        return self.lower + U * self.span

    def from_natural(self, X):
        X = as_matrix(X, "X", n_cols=self.n_dims)
        return (X - self.lower) / self.span

    def evaluate(self, U):
        """Clean values at unit-cube inputs."""
        values = np.asarray(self.clean_fn(self.to_natural(U)), dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError(f"benchmark {self.name} produced non-finite values")
        return values

    def gradient(self, U):
        """d value / d u at unit-cube inputs (None if no analytic gradient)."""
        if self.clean_grad is None:
            return None
        return np.asarray(self.clean_grad(self.to_natural(U)), dtype=float) * self.span


def clean_std(benchmark, n_points=10_000):
    """Spread of the clean function over an unscrambled Sobol sweep.

    Deterministic (no seed involved), so every method sees the same
    noise scale for a given benchmark.
    """
    U = sobol_points(n_points, benchmark.n_dims, scramble=False)
    return float(np.std(benchmark.evaluate(U)))


# ---------------------------------------------------------------------------
# Closed-form benchmark functions (natural coordinates)


def smooth_box(X, steepness=SMOOTH_BOX_STEEPNESS, b_start=SMOOTH_BOX_START,
               b_end=None):
    """Product over dimensions of smooth plateau steps.

    Each factor is sigmoid(steepness*(x_d - b_start)), optionally times
    (1 - sigmoid(steepness*(x_d - b_end))) when an end point is given.
    """
    X = as_matrix(X, "X")
    F = expit(steepness * (X - b_start))
    if b_end is not None:
        F = F * (1.0 - expit(steepness * (X - b_end)))
    return np.prod(F, axis=1)


def smooth_box_grad(X, steepness=SMOOTH_BOX_STEEPNESS, b_start=SMOOTH_BOX_START,
                    b_end=None):
    X = as_matrix(X, "X")
    S = expit(steepness * (X - b_start))
    factors = S
    dfactors = steepness * S * (1.0 - S)
    if b_end is not None:
        E = expit(steepness * (X - b_end))
        factors = S * (1.0 - E)
        dfactors = dfactors * (1.0 - E) - S * steepness * E * (1.0 - E)
    total = np.prod(factors, axis=1)
    # product-rule ratio is safe: sigmoid factors are strictly positive
    return total[:, None] * dfactors / factors


def grlee08(X):
    """x1 * exp(-x1^2 - x2^2)."""
    X = as_matrix(X, "X", n_cols=2)
    a, b = X[:, 0], X[:, 1]
    return a * np.exp(-a * a - b * b)


def grlee08_grad(X):
    X = as_matrix(X, "X", n_cols=2)
    a, b = X[:, 0], X[:, 1]
    E = np.exp(-a * a - b * b)
    return np.stack([E * (1.0 - 2.0 * a * a), -2.0 * a * b * E], axis=1)


def peaks(X):
    """The classic two-dimensional three-bump surface."""
    X = as_matrix(X, "X", n_cols=2)
    a, b = X[:, 0], X[:, 1]
    e1 = np.exp(-a * a - (b + 1.0) ** 2)
    e2 = np.exp(-a * a - b * b)
    e3 = np.exp(-((a + 1.0) ** 2) - b * b)
    return (3.0 * (1.0 - a) ** 2 * e1
            - 10.0 * (a / 5.0 - a ** 3 - b ** 5) * e2
            - e3 / 3.0)


def peaks_grad(X):
    X = as_matrix(X, "X", n_cols=2)
    a, b = X[:, 0], X[:, 1]
    e1 = np.exp(-a * a - (b + 1.0) ** 2)
    e2 = np.exp(-a * a - b * b)
    e3 = np.exp(-((a + 1.0) ** 2) - b * b)
    poly = a / 5.0 - a ** 3 - b ** 5
    da = (3.0 * e1 * (-2.0 * (1.0 - a) - 2.0 * a * (1.0 - a) ** 2)
          - 10.0 * e2 * ((0.2 - 3.0 * a * a) - 2.0 * a * poly)
          + (2.0 / 3.0) * (a + 1.0) * e3)
    db = (-6.0 * (1.0 - a) ** 2 * (b + 1.0) * e1
          - 10.0 * e2 * (-5.0 * b ** 4 - 2.0 * b * poly)
          + (2.0 / 3.0) * b * e3)
    return np.stack([da, db], axis=1)


HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])

HARTMANN3_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
HARTMANN3_P = 1e-4 * np.array([
    [3689.0, 1170.0, 2673.0],
    [4699.0, 4387.0, 7470.0],
    [1091.0, 8732.0, 5547.0],
    [381.0, 5743.0, 8828.0],
])

HARTMANN6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
HARTMANN6_P = 1e-4 * np.array([
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
])

# four-dimensional variant: leading columns of the six-dimensional
# constants with the conventional affine renormalization
HARTMANN4_A = HARTMANN6_A[:, :4]
HARTMANN4_P = HARTMANN6_P[:, :4]
HARTMANN4_SHIFT = 1.1
HARTMANN4_SCALE = 0.839


def _hartmann_exponentials(X, A, P):
    diff = X[:, None, :] - P[None, :, :]
    return np.exp(-np.sum(A[None, :, :] * diff * diff, axis=2))


def hartmann3(X):
    X = as_matrix(X, "X", n_cols=3)
    return -_hartmann_exponentials(X, HARTMANN3_A, HARTMANN3_P) @ HARTMANN_ALPHA


def hartmann3_grad(X):
    X = as_matrix(X, "X", n_cols=3)
    E = _hartmann_exponentials(X, HARTMANN3_A, HARTMANN3_P)
    diff = X[:, None, :] - HARTMANN3_P[None, :, :]
    return np.einsum("ni,i,id,nid->nd", E, HARTMANN_ALPHA,
                     2.0 * HARTMANN3_A, diff)


def hartmann4(X):
    X = as_matrix(X, "X", n_cols=4)
    S = _hartmann_exponentials(X, HARTMANN4_A, HARTMANN4_P) @ HARTMANN_ALPHA
    return (HARTMANN4_SHIFT - S) / HARTMANN4_SCALE


def hartmann4_grad(X):
    X = as_matrix(X, "X", n_cols=4)
    E = _hartmann_exponentials(X, HARTMANN4_A, HARTMANN4_P)
    diff = X[:, None, :] - HARTMANN4_P[None, :, :]
    return np.einsum("ni,i,id,nid->nd", E, HARTMANN_ALPHA,
                     2.0 * HARTMANN4_A, diff) / HARTMANN4_SCALE


# ---------------------------------------------------------------------------
# GP prior sample surrogate


def gp_sample_benchmark(seed, n_dims=2, hyperparams=None,
                        grid_size=GPSAMPLE_GRID_SIZE):
    """Benchmark wrapping one deterministic GP prior sample path.

    The path is drawn on a scrambled Sobol grid and extended to the whole
    cube by noise-free conditioning; querying a grid point returns the
    drawn value (up to solver jitter).
    """
    if hyperparams is None:
        hyperparams = GPHyperparams(np.full(n_dims, 0.2), 1.0, 0.01)
    grid = sobol_points(grid_size, n_dims,
                        seed=child_rng(seed, "gpsample_grid"), scramble=True)
    K = kernels.kernel_matrix(grid, grid, hyperparams)
    L, _ = chol_with_jitter(K)
    z = child_rng(seed, "gpsample_draw").standard_normal(grid_size)
    values = L @ z
    alpha = cho_solve((L, True), values)

    def fn(X):
        Kx = kernels.kernel_matrix(X, grid, hyperparams)
        return Kx @ alpha

    def grad(X):
        R = kernels.scaled_distance(X, grid, hyperparams.lengthscales)
        Q = kernels.radial_coefficient(R, hyperparams) * alpha[None, :]
        qsum = Q.sum(axis=1)
        return (qsum[:, None] * X - Q @ grid) / hyperparams.lengthscales ** 2

    return Benchmark(
        name=f"gpsample-{seed}",
        n_dims=n_dims,
        lower=np.zeros(n_dims),
        upper=np.ones(n_dims),
        clean_fn=fn,
        clean_grad=grad,
        metadata={"seed": int(seed), "grid_size": int(grid_size),
                  "lengthscales": hyperparams.lengthscales.tolist(),
                  "signal_variance": hyperparams.signal_variance},
    )


# ---------------------------------------------------------------------------
# Registry


def _box_benchmark(n_dims):
    return Benchmark(
        name=f"box{n_dims}",
        n_dims=n_dims,
        lower=np.full(n_dims, -1.0),
        upper=np.full(n_dims, 1.0),
        clean_fn=smooth_box,
        clean_grad=smooth_box_grad,
        metadata={"steepness": SMOOTH_BOX_STEEPNESS, "b_start": SMOOTH_BOX_START},
    )


def get_benchmark(name, seed=0):
    """Look up a benchmark by registry name.

    ``gpsample`` folds the seed into the drawn path; closed-form
    benchmarks ignore it.
    """
    if name == "grlee08":
        return Benchmark("grlee08", 2, [-2.0, -2.0], [6.0, 6.0],
                         grlee08, grlee08_grad)
    if name == "peaks":
        return Benchmark("peaks", 2, [-3.0, -3.0], [3.0, 3.0],
                         peaks, peaks_grad)
    if name == "box2":
        return _box_benchmark(2)
    if name == "box3":
        return _box_benchmark(3)
    if name == "hartmann3":
        return Benchmark("hartmann3", 3, np.zeros(3), np.ones(3),
                         hartmann3, hartmann3_grad)
    if name == "hartmann4":
        return Benchmark("hartmann4", 4, np.zeros(4), np.ones(4),
                         hartmann4, hartmann4_grad)
    if name == "gpsample":
        return gp_sample_benchmark(seed)
    raise DomainError(f"unknown benchmark {name!r}")


BENCHMARK_NAMES = ("grlee08", "peaks", "box2", "box3", "hartmann3",
                   "hartmann4", "gpsample")
