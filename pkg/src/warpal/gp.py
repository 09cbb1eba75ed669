"""Exact Gaussian-process regression through a monotone input warp.

The model is a zero-mean GP with a Matern 5/2 ARD kernel evaluated on
warped inputs: cov(x, x') = k(T(x), T(x')) with T a warp from
:mod:`warpal.warps`.  Targets are standardized to zero mean and unit
variance inside :func:`condition` by default (predictions are given back
in the original units); pass ``standardize=False`` to work with raw
targets.  Inference is by Cholesky factorization with an escalating
jitter fallback.

Hyperparameters are always handled in log space: ARD lengthscales,
signal variance, and noise variance, in that order.  The marginal
log-likelihood and its log-space gradient are closed form:

    mll  = -1/2 y' K^-1 y - 1/2 log|K| - N/2 log 2pi
    dmll/dtheta = 1/2 tr((alpha alpha' - K^-1) dK/dtheta),  alpha = K^-1 y

with K the warped-input kernel matrix plus noise (and any jitter that
conditioning required).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from . import kernels
from .exceptions import (DomainError, DuplicatePointError, IllConditionedError,
                         ShapeError, UnsupportedConfigError)
from .validation import as_matrix, as_vector, check_positive, check_unit_cube
from .warps import IdentityWarp, Warp

LOG_2PI = float(np.log(2.0 * np.pi))

JITTER_START = 1e-8
JITTER_CAP = 1e-2

DEFAULT_LENGTHSCALE = 0.3
DEFAULT_SIGNAL_VARIANCE = 1.0
DEFAULT_NOISE_VARIANCE = 0.01


@dataclass(frozen=True, eq=False)
class GPHyperparams:
    """ARD lengthscales plus signal and noise variances, all positive."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        if ls.size < 1 or not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise DomainError("lengthscales must be positive and finite")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance",
                           check_positive(self.signal_variance, "signal_variance"))
        object.__setattr__(self, "noise_variance",
                           check_positive(self.noise_variance, "noise_variance"))

    @property
    def n_dims(self):
        return self.lengthscales.size

    def log_vector(self):
        """[log ls_1, ..., log ls_D, log sv, log nv]."""
        return np.concatenate([
            np.log(self.lengthscales),
            [np.log(self.signal_variance), np.log(self.noise_variance)],
        ])

    @classmethod
    def from_log_vector(cls, z, n_dims):
        z = np.asarray(z, dtype=float).ravel()
        if z.size != n_dims + 2:
            raise ShapeError(f"expected {n_dims + 2} log-parameters, got {z.size}")
        return cls(np.exp(z[:n_dims]), float(np.exp(z[n_dims])),
                   float(np.exp(z[n_dims + 1])))

    @classmethod
    def default(cls, n_dims):
        return cls(np.full(n_dims, DEFAULT_LENGTHSCALE),
                   DEFAULT_SIGNAL_VARIANCE, DEFAULT_NOISE_VARIANCE)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed inputs in the unit cube with scalar targets.

    Exact duplicate input rows are rejected; near-duplicates are the
    acquisition layer's responsibility.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        y = as_vector(self.y, "y", size=X.shape[0])
        X = check_unit_cube(X, "X")
        if X.shape[0] == 0:
            raise ShapeError("dataset needs at least one observation")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise DuplicatePointError("dataset contains identical input rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def n_dims(self):
        return self.X.shape[1]

    def append(self, x, y):
        """New dataset with one more observation; duplicates rejected."""
        x = as_matrix(x, "x", n_cols=self.n_dims)
        if np.any(np.all(self.X == x, axis=1)):
            raise DuplicatePointError("new input duplicates an existing row")
        return Dataset(np.vstack([self.X, x]), np.append(self.y, float(y)))


@dataclass(frozen=True, eq=False)
class GPState:
    """Frozen result of conditioning a GP on a dataset.

    ``chol`` is the lower Cholesky factor of K = k(W, W) + (nv + jitter) I
    with W the warped inputs, and ``alpha`` solves K alpha = y_std where
    y_std are the (optionally standardized) targets.  Treat all arrays as
    immutable.
    """

    dataset: Dataset
    hyperparams: GPHyperparams
    warp: Warp
    warped_X: np.ndarray
    kernel: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    jitter: float

    @property
    def y_standardized(self):
        return (self.dataset.y - self.y_mean) / self.y_std

    def solve(self, B):
        """K^-1 B via the stored factor."""
        return cho_solve((self.chol, True), B)


def _standardization(y, standardize):
    if not standardize:
        return 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not np.isfinite(std) or std <= 0.0:
        std = 1.0
    return mean, std


def chol_with_jitter(K_noisy):
    """Lower Cholesky factor with escalating diagonal jitter.

    Jitter starts at JITTER_START * mean(diag) and grows tenfold per
    failure until JITTER_CAP * mean(diag); past that an
    IllConditionedError reports every level tried.
    """
    scale = float(np.mean(np.diag(K_noisy)))
    jitter = 0.0
    tried = []
    while True:
        try:
            L = cholesky(K_noisy + jitter * np.eye(K_noisy.shape[0]), lower=True)
            return L, jitter
        except LinAlgError:
            tried.append(jitter)
            jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_CAP * scale:
                raise IllConditionedError(
                    f"Cholesky failed at all jitter levels {tried}", jitters=tried)


def condition(dataset, hyperparams, warp=None, standardize=True):
    """Factorize the warped-input kernel and precompute alpha."""
    if warp is None:
        warp = IdentityWarp(dataset.n_dims)
    if hyperparams.n_dims != dataset.n_dims:
        raise ShapeError("hyperparameter dimension does not match data")
    if getattr(warp, "n_dims", dataset.n_dims) != dataset.n_dims:
        raise ShapeError("warp dimension does not match data")
    W = warp.transform(dataset.X)
    K = kernels.kernel_matrix(W, W, hyperparams)
    K_noisy = K + hyperparams.noise_variance * np.eye(dataset.n)
    L, jitter = chol_with_jitter(K_noisy)
    y_mean, y_std = _standardization(dataset.y, standardize)
    y_tilde = (dataset.y - y_mean) / y_std
    alpha = cho_solve((L, True), y_tilde)
    return GPState(dataset=dataset, hyperparams=hyperparams, warp=warp,
                   warped_X=W, kernel=K, chol=L, alpha=alpha,
                   y_mean=y_mean, y_std=y_std, jitter=jitter)


def posterior_batch(state, Xs, observation_noise=False):
    """Posterior mean and variance at a batch of query points.

    Queries are warped with the state's warp before kernel evaluation.
    Outputs are de-standardized: mean in original target units, variance
    scaled by the squared target standard deviation.  With
    ``observation_noise`` the learned noise variance is added (an
    observation rather than latent predictive distribution).
    """
    Xs = check_unit_cube(as_matrix(Xs, "Xs", n_cols=state.dataset.n_dims), "Xs")
    Ws = state.warp.transform(Xs)
    Kx = kernels.kernel_matrix(state.warped_X, Ws, state.hyperparams)
    mu = Kx.T @ state.alpha
    V = solve_triangular(state.chol, Kx, lower=True)
    s2 = state.hyperparams.signal_variance - np.sum(V * V, axis=0)
    s2 = np.maximum(s2, 0.0)
    if observation_noise:
        s2 = s2 + state.hyperparams.noise_variance
    scale = state.y_std
    return state.y_mean + scale * mu, scale * scale * s2


def posterior(state, xs, observation_noise=False):
    """Posterior (mean, variance) at a single query point."""
    mu, s2 = posterior_batch(state, np.atleast_2d(xs), observation_noise)
    return float(mu[0]), float(s2[0])


def variance_internal_batch(state, Xs_warped):
    """Latent posterior variance, standardized units, on pre-warped points.

    Used by the acquisition layer, where only the model-internal scale
    matters; also returns the pieces its gradient chain reuses: the
    cross-kernel, K^-1 k*, and the scaled distances with their
    exponential factor.
    """
    R = kernels.scaled_distance(state.warped_X, Xs_warped,
                                state.hyperparams.lengthscales)
    Kx, E = kernels.kernel_parts_from_r(R, state.hyperparams)
    beta = state.solve(Kx)
    s2 = state.hyperparams.signal_variance - np.sum(Kx * beta, axis=0)
    return np.maximum(s2, 0.0), Kx, beta, R, E


def posterior_mean_grad_batch(state, Xs):
    """Exact gradient of the posterior mean at each query (identity warp).

    d mu / d x_d = y_std * sum_i alpha_i g(r_i) (x_d - X_id) / ls_d^2 with
    g the kernel's radial coefficient.
    """
    if not state.warp.is_identity:
        raise UnsupportedConfigError(
            "posterior mean gradients are only defined for the identity warp")
    Xs = check_unit_cube(as_matrix(Xs, "Xs", n_cols=state.dataset.n_dims), "Xs")
    hp = state.hyperparams
    R = kernels.scaled_distance(Xs, state.warped_X, hp.lengthscales)
    Q = kernels.radial_coefficient(R, hp) * state.alpha[None, :]
    qsum = Q.sum(axis=1)
    grad = (qsum[:, None] * Xs - Q @ state.warped_X) / (hp.lengthscales ** 2)
    return state.y_std * grad


def posterior_mean_grad(state, xs):
    """Gradient of the posterior mean at one query point."""
    return posterior_mean_grad_batch(state, np.atleast_2d(xs))[0]


def mll_from_state(state):
    y_tilde = state.y_standardized
    quad = float(y_tilde @ state.alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(state.chol))))
    return -0.5 * quad - 0.5 * logdet - 0.5 * state.dataset.n * LOG_2PI


def mll(dataset, hyperparams, warp=None, standardize=True):
    """Marginal log-likelihood of the (optionally standardized) targets."""
    return mll_from_state(condition(dataset, hyperparams, warp, standardize))


def _mll_and_grad(dataset, hyperparams, warp, standardize):
    state = condition(dataset, hyperparams, warp, standardize)
    value = mll_from_state(state)

    hp = state.hyperparams
    n = dataset.n
    Kinv = state.solve(np.eye(n))
    A = np.outer(state.alpha, state.alpha) - Kinv

    grad = np.empty(hp.n_dims + 2)
    W = state.warped_X
    R = kernels.scaled_distance(W, W, hp.lengthscales)
    P = A * (-kernels.radial_coefficient(R, hp))  # positive radial factor
    for d in range(hp.n_dims):
        col = W[:, d]
        sq = (col[:, None] - col[None, :]) ** 2 / hp.lengthscales[d] ** 2
        grad[d] = 0.5 * float(np.sum(P * sq))
    grad[hp.n_dims] = 0.5 * float(np.sum(A * state.kernel))
    grad[hp.n_dims + 1] = 0.5 * hp.noise_variance * float(np.trace(A))
    return value, grad, state


def mll_grad(dataset, hyperparams, warp=None, standardize=True):
    """Gradient of the marginal log-likelihood in log-hyperparameter space.

    Order matches ``GPHyperparams.log_vector``.
    """
    return _mll_and_grad(dataset, hyperparams, warp, standardize)[1]


@dataclass(frozen=True)
class FitResult:
    hyperparams: GPHyperparams
    mll: float
    converged: bool
    message: str = ""
    n_evals: int = 0


def fit_hyperparams(dataset, warp=None, init=None, standardize=True,
                    max_iter=300, gtol=1e-6, ftol=1e-9):
    """Maximize the marginal likelihood over log-hyperparameters.

    Single start (optionally warm), plain quasi-Newton in log space.  The
    best evaluated iterate is returned even if the optimizer reports
    failure, so the fitted likelihood never falls below the starting one.
    """
    if dataset.n < 2:
        raise DomainError("hyperparameter fitting needs at least 2 observations")
    if init is None:
        init = GPHyperparams.default(dataset.n_dims)
    z0 = init.log_vector()
    best = {"z": z0.copy(), "f": np.inf, "evals": 0}

    def objective(z):
        best["evals"] += 1
        # line searches may probe steps far past exp() range; wall them off
        if np.any(np.abs(z) > 300.0):
            return 1e25, np.zeros_like(z)
        try:
            value, grad, _ = _mll_and_grad(
                dataset, GPHyperparams.from_log_vector(z, dataset.n_dims),
                warp, standardize)
        except (IllConditionedError, FloatingPointError, DomainError):
            return 1e25, np.zeros_like(z)
        f = -value
        if np.isfinite(f) and f < best["f"]:
            best["f"] = f
            best["z"] = np.array(z, copy=True)
        return f, -grad

    result = minimize(objective, z0, jac=True, method="L-BFGS-B",
                      options={"maxiter": max_iter, "ftol": ftol, "gtol": gtol})
    fitted = GPHyperparams.from_log_vector(best["z"], dataset.n_dims)
    return FitResult(hyperparams=fitted, mll=-best["f"],
                     converged=bool(result.success), message=str(result.message),
                     n_evals=best["evals"])
