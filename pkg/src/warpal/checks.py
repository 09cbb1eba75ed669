"""Fast self-verification suite behind the ``check`` CLI command.

Every check is self-contained and seeded, compares library output
against an independently coded reference (dense solves, central finite
differences, numeric quadrature), and is sized to keep the whole suite
well under a minute.  ``perturb_kernel`` deliberately skews the Matern
constant so the fault path of the GP oracle check can be exercised.
"""

import time
from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from . import kernels
from .acquisition import eig_and_grad_batch, eig_batch
from .gp import (Dataset, GPHyperparams, condition, mll, mll_grad,
                 posterior_batch)
from .metrics import crps_gaussian
from .seeding import child_rng
from .warp_training import build_reference, ss_loss
from .warps import make_warp

GRID = 64
AXIS_SLICES = (0.17, 0.5, 0.83)

_CHECKS = []


def _check(name):
    def register(fn):
        _CHECKS.append((name, fn))
        return fn
    return register


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _dense_kernel(A, B, hp):
    # Independent Matern 5/2 evaluation; constants deliberately local so
    # a perturbed library constant shows up as a mismatch.
    scaled = (A[:, None, :] - B[None, :, :]) / hp.lengthscales
    r = np.sqrt(np.sum(scaled * scaled, axis=-1))
    c = sqrt(5.0)
    return (hp.signal_variance
            * (1.0 + c * r + 5.0 * r * r / 3.0) * np.exp(-c * r))


@_check("dense-solve GP oracle")
def _gp_oracle():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(30, 2))
    y = np.sin(5.0 * X[:, 0]) + 0.5 * np.cos(3.0 * X[:, 1])
    hp = GPHyperparams(np.array([0.4, 0.7]), 1.3, 1e-2)
    state = condition(Dataset(X, y), hp, standardize=False)
    Xs = rng.uniform(size=(40, 2))
    mu, var = posterior_batch(state, Xs)

    K = _dense_kernel(X, X, hp) + hp.noise_variance * np.eye(30)
    Kx = _dense_kernel(X, Xs, hp)
    solved = np.linalg.solve(K, np.column_stack([y, Kx]))
    mu_ref = Kx.T @ solved[:, 0]
    var_ref = hp.signal_variance - np.sum(Kx * solved[:, 1:], axis=0)
    sign, logdet = np.linalg.slogdet(K)
    mll_ref = (-0.5 * float(y @ solved[:, 0]) - 0.5 * logdet
               - 0.5 * X.shape[0] * np.log(2.0 * np.pi))
    err = max(float(np.max(np.abs(mu - mu_ref))),
              float(np.max(np.abs(var - var_ref))),
              abs(mll(Dataset(X, y), hp, standardize=False) - mll_ref))
    return err < 1e-6 and sign > 0, f"max abs deviation {err:.3e}"


@_check("likelihood gradient vs finite differences")
def _mll_gradient():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(14, 2))
    y = rng.standard_normal(14)
    dataset = Dataset(X, y)
    hp = GPHyperparams(np.array([0.5, 0.9]), 1.1, 0.05)
    grad = mll_grad(dataset, hp)
    z = hp.log_vector()
    h = 1e-6
    fd = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = (mll(dataset, GPHyperparams.from_log_vector(zp, 2))
                 - mll(dataset, GPHyperparams.from_log_vector(zm, 2))) / (2 * h)
    err = float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0)))
    return err < 1e-5, f"max rel deviation {err:.3e}"


@_check("warp-training gradient vs finite differences")
def _warp_gradient():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(12, 2))
    y = rng.standard_normal(12)
    dataset = Dataset(X, y)
    hp = GPHyperparams.default(2)
    probes = build_reference(dataset, hp, n_probes=64, seed=9)
    worst = 0.0
    for kind in ("kumaraswamy", "crqs"):
        warp = make_warp(kind, 2, n_bins=4, n_layers=2,
                         random_state=child_rng(5, "warp_init"))
        phi = warp.get_phi() + 0.1 * rng.standard_normal(warp.n_params)
        warp.set_phi(phi)
        from .warp_training import ss_loss_and_grad
        _, grad = ss_loss_and_grad(dataset, hp, warp, probes)
        u = rng.standard_normal(phi.size)
        u /= np.linalg.norm(u)
        h = 1e-6

        def at(step, w=warp, p=phi, d=u):
            w.set_phi(p + step * d)
            value = ss_loss(dataset, hp, w, probes)
            w.set_phi(p)
            return value

        fd = (at(h) - at(-h)) / (2 * h)
        worst = max(worst, abs(float(grad @ u) - fd) / max(abs(fd), 1e-3))
    return worst < 1e-4, f"max rel deviation {worst:.3e}"


@_check("acquisition gradient vs finite differences")
def _acquisition_gradient():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(16, 2))
    y = rng.standard_normal(16)
    state = condition(Dataset(X, y), GPHyperparams.default(2))
    Xs = rng.uniform(0.05, 0.95, size=(10, 2))
    _, grad = eig_and_grad_batch(state, Xs)
    h = 1e-6
    worst = 0.0
    for i in range(Xs.shape[0]):
        for d in range(2):
            Xp, Xm = Xs.copy(), Xs.copy()
            Xp[i, d] += h
            Xm[i, d] -= h
            fd = (eig_batch(state, Xp)[i] - eig_batch(state, Xm)[i]) / (2 * h)
            worst = max(worst, abs(grad[i, d] - fd) / max(abs(fd), 1e-3))
    return worst < 1e-4, f"max rel deviation {worst:.3e}"


@_check("warp monotonicity and endpoint pinning")
def _monotonicity():
    rng = np.random.default_rng(13)
    t = np.linspace(0.0, 1.0, GRID)
    for kind in ("kumaraswamy", "crqs"):
        warp = make_warp(kind, 2, random_state=child_rng(13, "warp_init"))
        warp.set_phi(warp.get_phi() + 0.3 * rng.standard_normal(warp.n_params))
        for axis in range(2):
            for level in AXIS_SLICES:
                X = np.full((GRID, 2), level)
                X[:, axis] = t
                Y = warp.transform(X)
                if not np.all(np.diff(Y[:, axis]) > 0.0):
                    return False, f"{kind} not increasing along axis {axis}"
                if Y[0, axis] != 0.0 or Y[-1, axis] != 1.0:
                    return False, f"{kind} endpoints not pinned on axis {axis}"
    return True, "strictly increasing, endpoints exact"


@_check("CRPS closed form vs quadrature")
def _crps_quadrature():
    cases = ((0.0, 1.0, 0.0), (0.0, 1.0, 2.3), (1.5, 0.3, -0.7),
             (-2.0, 4.0, -2.5))
    worst = 0.0
    for mu, sigma, obs in cases:
        closed = float(crps_gaussian(np.array([mu]), np.array([sigma]),
                                     np.array([obs]))[0])

        def integrand(tval, m=mu, s=sigma, o=obs):
            return (norm.cdf((tval - m) / s) - (tval >= o)) ** 2

        lo, hi = mu - 12 * sigma, mu + 12 * sigma
        ref = (quad(integrand, lo, obs, limit=200)[0]
               + quad(integrand, obs, hi, limit=200)[0])
        worst = max(worst, abs(closed - ref) / ref)
    return worst < 1e-8, f"max rel deviation {worst:.3e}"


def run_checks(perturb_kernel=False):
    """Execute the suite; returns one CheckResult per registered check.

    ``perturb_kernel`` skews the library's Matern constant for the
    duration (fault-injection hook: the dense-solve oracle must fail).
    """
    results = []
    original = kernels.SQRT5
    if perturb_kernel:
        kernels.SQRT5 = original * (1.0 + 1e-3)
    try:
        for name, fn in _CHECKS:
            start = time.perf_counter()
            try:
                passed, detail = fn()
            except Exception as exc:  # a crash is a failed check, not an abort
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(name, bool(passed), detail,
                                       time.perf_counter() - start))
    finally:
        kernels.SQRT5 = original
    return results
