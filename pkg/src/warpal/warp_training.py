"""Observation-driven training of input warps against a frozen GP.

With kernel hyperparameters held fixed, the warp parameters phi are
fitted by full-batch AdamW on one of two objectives:

* ``self_supervised``: draw M space-filling probe points u, record the
  posterior means mu_ref(u) of the unwarped (identity) GP once, then
  minimize the mean Gaussian negative log-likelihood of those references
  under the warped model's predictive distribution,

      L(phi) = mean_u [ 0.5 log(2 pi v(u)) + (mu_ref(u) - mu_phi(u))^2 / (2 v(u)) ],
      v(u)   = s2_phi(u) + nv,

  which pulls predictive uncertainty toward regions where the warped
  model disagrees with the reference.

* ``mll``: the negative marginal log-likelihood of the data under the
  warped kernel, gradients restricted to phi.

Gradients with respect to phi are exact, via matrix adjoints through the
Cholesky solves and the kernel, chained into each warp's parameter VJP;
they are validated against finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import kernels
from .exceptions import DomainError
from .gp import GPState, chol_with_jitter, condition, mll_from_state, posterior_batch
from .optimizers import AdamWConfig, AdamWState, adamw_step
from .sampling import sobol_points
from .seeding import child_rng

OBJECTIVES = ("self_supervised", "mll")


@dataclass(frozen=True)
class WarpTrainConfig:
    objective: str = "self_supervised"
    steps: int = 400
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 50
    grad_clip_norm: float = 2.0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_probes: int = 1024
    probe_sampler: str = "sobol"  # or "uniform"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}")
        if self.steps < 0 or self.n_probes < 1:
            raise DomainError("steps must be >= 0 and n_probes >= 1")


@dataclass(frozen=True)
class ProbeSet:
    """Probe locations with reference posterior means (original units)."""

    U: np.ndarray
    mu_ref: np.ndarray
    seed: int


@dataclass
class WarpTrainResult:
    warp: object
    loss_trace: np.ndarray
    flag: str = ""  # "", "diverged", or "loss_increased"

    @property
    def final_loss(self):
        return float(self.loss_trace[-1]) if self.loss_trace.size else float("nan")


def draw_probes(n_probes, n_dims, seed, sampler="sobol"):
    if sampler == "sobol":
        return sobol_points(n_probes, n_dims, seed=seed, scramble=True)
    if sampler == "uniform":
        return child_rng(seed, "uniform_probes").uniform(0.0, 1.0,
                                                         size=(n_probes, n_dims))
    raise DomainError(f"unknown probe sampler {sampler!r}")


def build_reference(dataset, hyperparams, n_probes=1024, seed=0,
                    sampler="sobol", standardize=True):
    """Probe set scored by the identity-warp GP at the given hyperparameters."""
    if n_probes < 1:
        raise DomainError("n_probes must be >= 1")
    U = draw_probes(n_probes, dataset.n_dims, seed, sampler)
    reference = condition(dataset, hyperparams, warp=None, standardize=standardize)
    mu_ref, _ = posterior_batch(reference, U)
    return ProbeSet(U=U, mu_ref=mu_ref, seed=int(seed))


def _kernel_space_grad_sym(G, W, radial, hyperparams):
    """d Loss / d W for a symmetric-slot kernel matrix adjoint G (N x N).

    radial is the precomputed dk/d-input coefficient matrix for W x W.
    """
    P = (G + G.T) * radial
    rowsum = P.sum(axis=1)
    return (rowsum[:, None] * W - P @ W) / hyperparams.lengthscales ** 2


def _kernel_space_grad_cross(G, Wa, Wb, radial, hyperparams):
    """d Loss / d (Wa, Wb) for a cross-kernel adjoint G (Na x Nb)."""
    P = G * radial
    ls2 = hyperparams.lengthscales ** 2
    dWa = (P.sum(axis=1)[:, None] * Wa - P @ Wb) / ls2
    dWb = (P.sum(axis=0)[:, None] * Wb - P.T @ Wa) / ls2
    return dWa, dWb


def _standardized_targets(dataset, standardize):
    mean = float(np.mean(dataset.y)) if standardize else 0.0
    std = float(np.std(dataset.y)) if standardize else 1.0
    if not np.isfinite(std) or std <= 0.0:
        std = 1.0
    return (dataset.y - mean) / std, mean, std


def _factorize(W, hyperparams, n):
    """Cholesky of the warped train kernel plus derivative coefficients."""
    R = kernels.scaled_distance(W, W, hyperparams.lengthscales)
    K, E = kernels.kernel_parts_from_r(R, hyperparams)
    L, _ = chol_with_jitter(K + hyperparams.noise_variance * np.eye(n))
    return L, kernels.radial_coefficient(R, hyperparams, exp_part=E)


def ss_loss_and_grad(dataset, hyperparams, warp, probes, standardize=True):
    """Self-supervised loss and its exact gradient in phi.

    Works in original target units; the gradient chains the per-probe
    Gaussian NLL through the posterior mean/variance adjoints of the
    warped kernel system into the warp's parameter VJP.  Training and
    probe points share one cached warp forward pass.
    """
    hp = hyperparams
    n = dataset.n
    Zw, cache = warp.forward_cached(np.vstack([dataset.X, probes.U]))
    W, Uw = Zw[:n], Zw[n:]
    L, radial = _factorize(W, hp, n)
    y_tilde, mean, std = _standardized_targets(dataset, standardize)
    alpha = cho_solve((L, True), y_tilde)
    Rx = kernels.scaled_distance(W, Uw, hp.lengthscales)
    Kx, Ex = kernels.kernel_parts_from_r(Rx, hp)
    beta = cho_solve((L, True), Kx)

    m = probes.U.shape[0]
    mu_std = Kx.T @ alpha
    s2_std = np.maximum(hp.signal_variance - np.sum(Kx * beta, axis=0), 0.0)
    mu = mean + std * mu_std
    v = std * std * (s2_std + hp.noise_variance)
    resid = probes.mu_ref - mu
    losses = 0.5 * np.log(2.0 * np.pi * v) + resid * resid / (2.0 * v)
    loss = float(np.mean(losses))
    if not np.isfinite(loss):
        raise DomainError("self-supervised loss is non-finite")

    # per-probe adjoints, folded back to standardized model quantities
    dl_dmu = -resid / v / m
    dl_dv = (0.5 / v - resid * resid / (2.0 * v * v)) / m
    c1 = dl_dmu * std
    c2 = dl_dv * std * std

    G_K = -np.outer(beta @ c1, alpha) + (beta * c2) @ beta.T
    G_Kx = np.outer(alpha, c1) - 2.0 * beta * c2

    dW = _kernel_space_grad_sym(G_K, W, radial, hp)
    radial_x = kernels.radial_coefficient(Rx, hp, exp_part=Ex)
    dWa, dUw = _kernel_space_grad_cross(G_Kx, W, Uw, radial_x, hp)
    dW += dWa
    return loss, warp.vjp_from_cache(cache, np.vstack([dW, dUw]))


def ss_loss(dataset, hyperparams, warp, probes, standardize=True):
    """Self-supervised loss value only."""
    state = condition(dataset, hyperparams, warp, standardize)
    mu, s2 = posterior_batch(state, probes.U)
    v = s2 + state.y_std ** 2 * hyperparams.noise_variance
    resid = probes.mu_ref - mu
    loss = float(np.mean(0.5 * np.log(2.0 * np.pi * v) + resid * resid / (2.0 * v)))
    if not np.isfinite(loss):
        raise DomainError("self-supervised loss is non-finite")
    return loss


def warped_mll_loss_and_grad(dataset, hyperparams, warp, standardize=True):
    """Negative marginal log-likelihood under the warped kernel, grad in phi."""
    hp = hyperparams
    n = dataset.n
    W, cache = warp.forward_cached(dataset.X)
    L, radial = _factorize(W, hp, n)
    y_tilde, _, _ = _standardized_targets(dataset, standardize)
    alpha = cho_solve((L, True), y_tilde)
    quad = float(y_tilde @ alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    loss = 0.5 * quad + 0.5 * logdet + 0.5 * n * np.log(2.0 * np.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    G_K = -0.5 * (np.outer(alpha, alpha) - Kinv)
    dW = _kernel_space_grad_sym(G_K, W, radial, hp)
    return loss, warp.vjp_from_cache(cache, dW)


def train_warp(dataset, hyperparams, warp, cfg, probe_seed=0, probes=None):
    """Fit warp parameters with AdamW; hyperparameters are never touched.

    The learning rate follows learning_rate * lr_decay_factor**(step //
    lr_decay_every) exactly.  A non-finite loss or gradient aborts
    training, restores the pre-training parameters, and flags the result;
    a final loss above the initial one only flags it.
    """
    if warp.n_params == 0:
        return WarpTrainResult(warp=warp, loss_trace=np.zeros(0))
    if cfg.objective == "self_supervised" and probes is None:
        probes = build_reference(dataset, hyperparams, n_probes=cfg.n_probes,
                                 seed=probe_seed, sampler=cfg.probe_sampler)

    phi_start = warp.get_phi().copy()
    opt_cfg = AdamWConfig(learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                          beta2=cfg.beta2, eps=cfg.eps,
                          weight_decay=cfg.weight_decay,
                          clip_norm=cfg.grad_clip_norm)
    opt_state = AdamWState.zeros(phi_start.size)
    trace = np.empty(cfg.steps)
    phi = phi_start.copy()
    for step in range(cfg.steps):
        try:
            if cfg.objective == "self_supervised":
                loss, grad = ss_loss_and_grad(dataset, hyperparams, warp, probes)
            else:
                loss, grad = warped_mll_loss_and_grad(dataset, hyperparams, warp)
        except (DomainError, FloatingPointError):
            warp.set_phi(phi_start)
            return WarpTrainResult(warp=warp, loss_trace=trace[:step].copy(),
                                   flag="diverged")
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            warp.set_phi(phi_start)
            return WarpTrainResult(warp=warp, loss_trace=trace[:step].copy(),
                                   flag="diverged")
        trace[step] = loss
        lr = cfg.learning_rate * cfg.lr_decay_factor ** (step // cfg.lr_decay_every)
        phi = adamw_step(phi, grad, opt_state, opt_cfg, learning_rate=lr)
        warp.set_phi(phi)
    flag = ""
    if cfg.steps > 1 and trace[-1] > trace[0]:
        flag = "loss_increased"
    return WarpTrainResult(warp=warp, loss_trace=trace, flag=flag)
