"""Variance-based acquisition and its multi-start maximization.

The acquisition value at a query x is the expected information gain of
observing there, which for a GP is a monotone function of the latent
predictive variance:

    value(x) = 0.5 * log(1 + s2(T(x)) / nv)

with s2 the posterior variance in the model's standardized units and nv
the noise variance.  The constant additive term of the underlying
entropy difference is dropped; it shifts every value equally and cannot
change any argmax.  Because s2 never depends on the observed targets,
proposals are reproducible from the design and seed alone.

Maximization follows the candidate recipe: a Latin hypercube batch is
refined jointly by projected L-BFGS with strong Wolfe line search, and
the best point ever evaluated wins.  Proposals that collide with an
existing input are nudged by a tiny uniform jitter and re-checked.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import AcquisitionError, DomainError
from .gp import variance_internal_batch
from .optimizers import LBFGSResult, lbfgs_maximize
from .sampling import lhs_sample
from .validation import as_matrix, check_unit_cube


@dataclass(frozen=True)
class AcquisitionConfig:
    n_candidates: int = 500
    opt_steps: int = 300
    dedupe_radius: float = 1e-9
    jitter_scale: float = 1e-6
    max_jitter_attempts: int = 10

    def __post_init__(self):
        if self.n_candidates < 1:
            raise DomainError("n_candidates must be >= 1")
        if self.opt_steps < 1:
            raise DomainError("opt_steps must be >= 1")
        if self.dedupe_radius <= 0.0 or self.jitter_scale <= 0.0:
            raise DomainError("dedupe_radius and jitter_scale must be positive")


def eig_from_variance(s2, noise_variance):
    """Information-gain value as a monotone map of predictive variance."""
    return 0.5 * np.log1p(np.maximum(s2, 0.0) / noise_variance)


def eig_batch(state, Xs):
    """Acquisition values at a batch of unwarped query points."""
    Xs = check_unit_cube(as_matrix(Xs, "Xs", n_cols=state.dataset.n_dims), "Xs")
    Ws = state.warp.transform(Xs)
    s2 = variance_internal_batch(state, Ws)[0]
    return eig_from_variance(s2, state.hyperparams.noise_variance)


def eig(state, xs):
    """Acquisition value at a single query point."""
    return float(eig_batch(state, np.atleast_2d(xs))[0])


def eig_and_grad_batch(state, Xs):
    """Acquisition values and exact input gradients, chained through the warp.

    d s2 / d w comes from the kernel's radial form, then the warp's input
    Jacobian maps it back to unwarped coordinates.
    """
    Xs = check_unit_cube(as_matrix(Xs, "Xs", n_cols=state.dataset.n_dims), "Xs")
    hp = state.hyperparams
    Ws, J = state.warp.input_jacobian(Xs)
    s2, _, beta, R, E = variance_internal_batch(state, Ws)
    P = kernels.radial_coefficient(R, hp, exp_part=E) * beta
    colsum = P.sum(axis=0)
    ds2_dw = -2.0 * (colsum[:, None] * Ws - P.T @ state.warped_X) / hp.lengthscales ** 2
    vals = eig_from_variance(s2, hp.noise_variance)
    grad_w = (0.5 / (hp.noise_variance + s2))[:, None] * ds2_dw
    grads = np.einsum("nij,ni->nj", J, grad_w)
    return vals, grads


@dataclass(frozen=True)
class Proposal:
    x: np.ndarray
    value: float
    jitter_attempts: int
    optimizer: LBFGSResult


def propose(state, rng, config=None):
    """Pick the next query point by maximizing the acquisition value.

    Candidates come from a Latin hypercube draw on ``rng`` and are
    refined jointly; the returned point is therefore never worse than
    the best raw candidate.  A proposal within dedupe_radius of an
    existing input is jittered uniformly (up to max_jitter_attempts,
    then AcquisitionError).
    """
    cfg = config if config is not None else AcquisitionConfig()
    d = state.dataset.n_dims
    X0 = lhs_sample(cfg.n_candidates, d, rng)

    def f_and_grad(X):
        return eig_and_grad_batch(state, X)

    result = lbfgs_maximize(f_and_grad, X0, max_steps=cfg.opt_steps)
    x = result.x.copy()
    existing = state.dataset.X
    for attempt in range(cfg.max_jitter_attempts + 1):
        gap = np.min(np.sqrt(np.sum((existing - x) ** 2, axis=1)))
        if gap > cfg.dedupe_radius:
            value = result.value if attempt == 0 else eig(state, x)
            return Proposal(x=x, value=float(value), jitter_attempts=attempt,
                            optimizer=result)
        x = np.clip(x + rng.uniform(-cfg.jitter_scale, cfg.jitter_scale, size=d),
                    0.0, 1.0)
    raise AcquisitionError(
        f"proposal still within {cfg.dedupe_radius} of existing inputs after "
        f"{cfg.max_jitter_attempts} jitter attempts")
