"""Prediction quality metrics and learning-curve comparison statistics.

The pointwise metrics (MSE, Gaussian CRPS, posterior-mean-derivative
error) score a conditioned surrogate against a fixed evaluation grid.
The curve statistics summarize whole runs: per-run trapezoidal areas
under a metric-versus-iteration curve, and the ratio estimator for the
relative area change against a paired baseline, with its delta-method
variance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import gp
from .exceptions import DomainError, ShapeError
from .sampling import sobol_points
from .seeding import child_rng
from .validation import as_matrix

MIN_GRID_POINTS = 100

SQRT_2PI = np.sqrt(2.0 * np.pi)
SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class EvalGrid:
    """Fixed test inputs with clean values and gradients.

    One grid is shared by every method on a given (benchmark, seed) so
    the per-seed comparisons are paired.
    """

    Xtest: np.ndarray
    f_clean: np.ndarray
    grad_clean: np.ndarray = None

    def __post_init__(self):
        X = as_matrix(self.Xtest, "Xtest")
        if X.shape[0] < MIN_GRID_POINTS:
            raise ShapeError(
                f"evaluation grid needs at least {MIN_GRID_POINTS} points, "
                f"got {X.shape[0]}")
        f = np.asarray(self.f_clean, dtype=float).ravel()
        if f.size != X.shape[0]:
            raise ShapeError("f_clean length does not match Xtest rows")
        object.__setattr__(self, "Xtest", X)
        object.__setattr__(self, "f_clean", f)
        if self.grad_clean is not None:
            G = as_matrix(self.grad_clean, "grad_clean", n_cols=X.shape[1])
            if G.shape[0] != X.shape[0]:
                raise ShapeError("grad_clean rows do not match Xtest rows")
            object.__setattr__(self, "grad_clean", G)

    @property
    def n_points(self):
        return self.Xtest.shape[0]


def _fd_gradient(benchmark, U, step=1e-5):
    # central differences with the stencil pushed inside the cube
    G = np.empty_like(U)
    for d in range(U.shape[1]):
        lo = np.clip(U[:, d] - step, 0.0, 1.0)
        hi = np.clip(U[:, d] + step, 0.0, 1.0)
        Up = U.copy()
        Up[:, d] = hi
        Um = U.copy()
        Um[:, d] = lo
        G[:, d] = (benchmark.evaluate(Up) - benchmark.evaluate(Um)) / (hi - lo)
    return G


def eval_grid_for(benchmark, seed, n_points=256):
    """Build the shared evaluation grid for one (benchmark, seed) pair.

    The Sobol scramble is seeded from (seed, benchmark name) only, never
    from the method, so all methods on a seed score against identical
    points.  Gradients are analytic when the benchmark provides them and
    central finite differences otherwise.
    """
    rng = child_rng(seed, f"evalgrid:{benchmark.name}")
    Xtest = sobol_points(n_points, benchmark.n_dims, seed=rng)
    grad = benchmark.gradient(Xtest)
    if grad is None:
        grad = _fd_gradient(benchmark, Xtest)
    return EvalGrid(Xtest, benchmark.evaluate(Xtest), grad)


# ---------------------------------------------------------------------------
# Pointwise surrogate metrics (evaluated on the plain-input surrogate)


def mse(state, grid):
    """Mean squared error of the posterior mean against clean values."""
    mu, _ = gp.posterior_batch(state, grid.Xtest)
    diff = mu - grid.f_clean
    return float(np.mean(diff * diff))


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of a Gaussian predictive distribution, elementwise.

    sigma * [z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)] with z = (y - mu)/sigma.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(sigma <= 0.0) or not np.all(np.isfinite(sigma)):
        raise DomainError("crps_gaussian needs strictly positive sigma")
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / SQRT_2PI
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - 1.0 / SQRT_PI)


def crps(state, grid, observation_noise=False, targets=None):
    """Grid-mean CRPS of the posterior against targets.

    Defaults to the latent posterior scored on the clean values; pass
    ``observation_noise=True`` together with noisy ``targets`` to score
    the observation predictive distribution instead.
    """
    mu, s2 = gp.posterior_batch(state, grid.Xtest,
                                observation_noise=observation_noise)
    if targets is None:
        targets = grid.f_clean
    return float(np.mean(crps_gaussian(mu, np.sqrt(s2), targets)))


def mean_derivative_error(state, grid):
    """Mean squared gradient mismatch of the posterior mean.

    Averages (d mu/d x_d - d f/d x_d)^2 over grid points and dimensions.
    """
    if grid.grad_clean is None:
        raise DomainError("evaluation grid carries no clean gradients")
    G = gp.posterior_mean_grad_batch(state, grid.Xtest)
    diff = G - grid.grad_clean
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# Learning-curve statistics


@dataclass(frozen=True)
class CurveSet:
    """Per-run metric curves: one row per run, one column per iteration."""

    values: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.ndim != 2:
            raise ShapeError("curve set must be runs x iterations")
        if V.shape[0] < 2:
            raise ShapeError("need at least 2 runs for variance estimates")
        if V.shape[1] < 2:
            raise ShapeError("curves need at least 2 iterations")
        object.__setattr__(self, "values", V)

    @property
    def n_runs(self):
        return self.values.shape[0]

    def areas(self):
        return np.array([auc(row) for row in self.values])


def auc(curve):
    """Trapezoidal area under one curve with unit step spacing."""
    curve = np.asarray(curve, dtype=float).ravel()
    if curve.size < 2:
        raise DomainError("area needs at least 2 curve points")
    return float(np.trapezoid(curve))


def lower_bound_shift(curves, best_value):
    """Shift every curve down by the best observed value.

    Manufactures a lower bound for metrics that lack one; MSE and CRPS
    are already bounded at zero and are used unshifted.
    """
    return CurveSet(curves.values - float(best_value))


def area_reduction(metric_curves, baseline_curves):
    """Ratio estimate of the relative area change against a baseline.

    Returns (mean, variance) of (A_metric - A_baseline) / A_baseline over
    paired runs: the mean is the ratio of sample means mu_n / mu_d and
    the variance is the first-order delta-method expansion
    (1/R) (s2_n/mu_d^2 + mu_n^2 s2_d/mu_d^4 - 2 mu_n s_nd/mu_d^3) with
    unbiased sample (co)variances.  Negative mean = smaller area than
    the baseline; see ``as_percent`` for the sign-flipped display form.
    """
    if metric_curves.n_runs != baseline_curves.n_runs:
        raise ShapeError("curve sets must pair the same number of runs")
    A_m = metric_curves.areas()
    A_b = baseline_curves.areas()
    n = A_m - A_b
    d = A_b
    mu_n = float(np.mean(n))
    mu_d = float(np.mean(d))
    if mu_d == 0.0:
        raise DomainError("baseline mean area is zero; reduction undefined")
    R = n.size
    var_n = float(np.var(n, ddof=1))
    var_d = float(np.var(d, ddof=1))
    cov_nd = float(np.cov(n, d, ddof=1)[0, 1])
    variance = (var_n / mu_d ** 2
                + mu_n ** 2 * var_d / mu_d ** 4
                - 2.0 * mu_n * cov_nd / mu_d ** 3) / R
    return mu_n / mu_d, variance


def as_percent(mean, variance):
    """Display form: percent reduction (larger is better) and its std."""
    return -100.0 * mean, 100.0 * float(np.sqrt(max(variance, 0.0)))
