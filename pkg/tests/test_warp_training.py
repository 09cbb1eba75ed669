"""Tests for warp training: probe references, objectives, and the AdamW loop.

Loss values are checked against an independent dense-solve route, and
every analytic phi-gradient is checked against central finite
differences.
"""

import copy
import math

import numpy as np
import pytest
from conftest import central_diff, make_dataset

from warpal.exceptions import DomainError
from warpal.gp import GPHyperparams, condition, mll, posterior_batch
from warpal.warp_training import (
    ProbeSet,
    WarpTrainConfig,
    build_reference,
    draw_probes,
    ss_loss,
    ss_loss_and_grad,
    train_warp,
    warped_mll_loss_and_grad,
)
from warpal.warps import make_warp

HP = GPHyperparams(lengthscales=np.array([0.4, 0.3]), signal_variance=1.3,
                   noise_variance=1e-2)


def dense_predictive(dataset, hp, warp, U):
    """Warped GP predictive mean and total variance via plain dense solves."""
    from warpal.kernels import kernel_matrix

    W = warp.transform(dataset.X)
    Uw = warp.transform(U)
    y_mean, y_std = float(np.mean(dataset.y)), float(np.std(dataset.y))
    K = kernel_matrix(W, W, hp) + hp.noise_variance * np.eye(dataset.n)
    Kx = kernel_matrix(W, Uw, hp)
    alpha = np.linalg.solve(K, (dataset.y - y_mean) / y_std)
    mu = y_mean + y_std * (Kx.T @ alpha)
    s2 = hp.signal_variance - np.sum(Kx * np.linalg.solve(K, Kx), axis=0)
    v = y_std ** 2 * (s2 + hp.noise_variance)
    return mu, v


def bent_warp(d=2, scale=0.3, seed=0):
    warp = make_warp("kumaraswamy", d)
    rng = np.random.default_rng(seed)
    warp.set_phi(scale * rng.standard_normal(warp.n_params))
    return warp


def test_identity_warp_leaves_entropy_term_only():
    # With an identity warp the model reproduces the reference means
    # exactly, so the loss is the mean predictive entropy term alone.
    ds = make_dataset()
    probes = build_reference(ds, HP, n_probes=64, seed=3)
    state = condition(ds, HP, warp=None)
    _, s2 = posterior_batch(state, probes.U)
    v = s2 + state.y_std ** 2 * HP.noise_variance
    expected = float(np.mean(0.5 * np.log(2.0 * np.pi * v)))
    got = ss_loss(ds, HP, make_warp("identity", 2), probes)
    assert got == pytest.approx(expected, rel=1e-12)


def test_ss_loss_single_probe_dense_oracle():
    ds = make_dataset()
    warp = bent_warp()
    U = np.array([[0.3, 0.6]])
    probes = ProbeSet(U=U, mu_ref=np.array([0.7]), seed=0)
    mu, v = dense_predictive(ds, HP, warp, U)
    expected = 0.5 * math.log(2.0 * math.pi * v[0]) \
        + (0.7 - mu[0]) ** 2 / (2.0 * v[0])
    assert ss_loss(ds, HP, warp, probes) == pytest.approx(expected, rel=1e-9)
    loss, _ = ss_loss_and_grad(ds, HP, warp, probes)
    assert loss == pytest.approx(expected, rel=1e-9)


def test_ss_loss_and_grad_value_matches_posterior_route():
    ds = make_dataset()
    warp = bent_warp(seed=2)
    probes = build_reference(ds, HP, n_probes=32, seed=1)
    loss_fast, _ = ss_loss_and_grad(ds, HP, warp, probes)
    assert loss_fast == pytest.approx(ss_loss(ds, HP, warp, probes), rel=1e-10)


@pytest.mark.parametrize("kind,d", [("kumaraswamy", 2), ("crqs", 1)])
def test_ss_grad_matches_finite_differences(kind, d):
    ds = make_dataset(d=d)
    hp = GPHyperparams(lengthscales=np.full(d, 0.35), signal_variance=1.1,
                       noise_variance=5e-3)
    warp = make_warp(kind, d, random_state=4)
    rng = np.random.default_rng(9)
    warp.set_phi(warp.get_phi() + 0.1 * rng.standard_normal(warp.n_params))
    probes = build_reference(ds, hp, n_probes=32, seed=7)

    def f(phi):
        probe = copy.deepcopy(warp)
        probe.set_phi(phi)
        return ss_loss(ds, hp, probe, probes)

    _, grad = ss_loss_and_grad(ds, hp, warp, probes)
    g_fd = central_diff(f, warp.get_phi(), h=1e-5)
    assert np.allclose(grad, g_fd, rtol=1e-3, atol=1e-7)


def test_warped_mll_identity_matches_unwarped_mll():
    ds = make_dataset()
    loss, grad = warped_mll_loss_and_grad(ds, HP, make_warp("identity", 2))
    assert loss == pytest.approx(-mll(ds, HP), rel=1e-12)
    assert grad.size == 0


def test_warped_mll_grad_matches_finite_differences():
    ds = make_dataset()
    warp = bent_warp(seed=3)

    def f(phi):
        probe = copy.deepcopy(warp)
        probe.set_phi(phi)
        loss, _ = warped_mll_loss_and_grad(ds, HP, probe)
        return loss

    loss, grad = warped_mll_loss_and_grad(ds, HP, warp)
    assert np.isfinite(loss)
    assert np.allclose(grad, central_diff(f, warp.get_phi(), h=1e-6),
                       rtol=1e-4, atol=1e-9)


def test_build_reference_deterministic_and_scored_by_plain_gp():
    ds = make_dataset()
    a = build_reference(ds, HP, n_probes=50, seed=11)
    b = build_reference(ds, HP, n_probes=50, seed=11)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.mu_ref, b.mu_ref)
    assert a.seed == 11
    assert np.all(a.U >= 0.0) and np.all(a.U < 1.0)
    assert not np.array_equal(a.U, build_reference(ds, HP, n_probes=50, seed=12).U)
    mu, _ = posterior_batch(condition(ds, HP, warp=None), a.U)
    np.testing.assert_allclose(a.mu_ref, mu, rtol=1e-12)


def test_draw_probes_sobol_balances_dyadic_cells():
    # 256 scrambled Sobol points fill a 4x4 dyadic grid exactly evenly;
    # iid uniform draws do not.
    U = draw_probes(256, 2, seed=11, sampler="sobol")
    cells = (np.floor(U * 4).astype(int) * np.array([1, 4])).sum(axis=1)
    assert np.bincount(cells, minlength=16).tolist() == [16] * 16
    V = draw_probes(256, 2, seed=11, sampler="uniform")
    cells_v = (np.floor(V * 4).astype(int) * np.array([1, 4])).sum(axis=1)
    assert np.bincount(cells_v, minlength=16).tolist() != [16] * 16
    np.testing.assert_array_equal(V, draw_probes(256, 2, seed=11,
                                                 sampler="uniform"))
    with pytest.raises(DomainError):
        draw_probes(8, 2, seed=0, sampler="halton")


def test_train_warp_zero_learning_rate_is_noop():
    ds = make_dataset()
    warp = bent_warp(seed=5)
    phi0 = warp.get_phi().copy()
    cfg = WarpTrainConfig(steps=3, learning_rate=0.0, n_probes=16)
    result = train_warp(ds, HP, warp, cfg, probe_seed=2)
    np.testing.assert_array_equal(result.warp.get_phi(), phi0)
    assert result.loss_trace.shape == (3,)
    assert np.all(result.loss_trace == result.loss_trace[0])
    assert result.flag == ""


def test_train_warp_matches_manual_adamw_loop():
    from warpal.optimizers import AdamWConfig, AdamWState, adamw_step

    ds = make_dataset()
    cfg = WarpTrainConfig(steps=4, learning_rate=1e-3, lr_decay_every=2,
                          lr_decay_factor=0.5, n_probes=16)
    warp = bent_warp(seed=6)
    manual = copy.deepcopy(warp)

    result = train_warp(ds, HP, warp, cfg, probe_seed=5)

    probes = build_reference(ds, HP, n_probes=16, seed=5)
    opt_cfg = AdamWConfig(learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                          beta2=cfg.beta2, eps=cfg.eps,
                          weight_decay=cfg.weight_decay,
                          clip_norm=cfg.grad_clip_norm)
    opt_state = AdamWState.zeros(manual.n_params)
    phi = manual.get_phi().copy()
    trace = []
    for step in range(cfg.steps):
        loss, grad = ss_loss_and_grad(ds, HP, manual, probes)
        trace.append(loss)
        lr = cfg.learning_rate * cfg.lr_decay_factor ** (step // cfg.lr_decay_every)
        phi = adamw_step(phi, grad, opt_state, opt_cfg, learning_rate=lr)
        manual.set_phi(phi)

    np.testing.assert_array_equal(result.loss_trace, np.array(trace))
    np.testing.assert_array_equal(result.warp.get_phi(), manual.get_phi())


def test_train_warp_never_touches_hyperparams_or_data():
    ds = make_dataset()
    X0, y0 = ds.X.copy(), ds.y.copy()
    ls0 = HP.lengthscales.copy()
    train_warp(ds, HP, bent_warp(seed=7),
               WarpTrainConfig(steps=2, n_probes=8))
    np.testing.assert_array_equal(ds.X, X0)
    np.testing.assert_array_equal(ds.y, y0)
    np.testing.assert_array_equal(HP.lengthscales, ls0)


def test_train_warp_identity_short_circuits():
    ds = make_dataset()
    warp = make_warp("identity", 2)
    result = train_warp(ds, HP, warp, WarpTrainConfig(steps=10, n_probes=8))
    assert result.warp is warp
    assert result.loss_trace.size == 0
    assert result.flag == ""


class _PoisonedWarp:
    """Duck-typed warp whose gradient turns non-finite after one step."""

    def __init__(self):
        self.n_params = 2
        self._phi = np.zeros(2)
        self._calls = 0

    def get_phi(self):
        return self._phi.copy()

    def set_phi(self, phi):
        self._phi = np.asarray(phi, dtype=float).copy()

    def forward_cached(self, X):
        return X.copy(), None

    def vjp_from_cache(self, cache, cotangent):
        self._calls += 1
        if self._calls > 1:
            return np.full(2, np.nan)
        return np.ones(2)


def test_train_warp_nonfinite_gradient_reverts_and_flags():
    ds = make_dataset()
    warp = _PoisonedWarp()
    probes = build_reference(ds, HP, n_probes=8, seed=1)
    result = train_warp(ds, HP, warp, WarpTrainConfig(steps=5, n_probes=8),
                        probes=probes)
    assert result.flag == "diverged"
    assert result.loss_trace.shape == (1,)
    np.testing.assert_array_equal(result.warp.get_phi(), np.zeros(2))


def test_train_warp_mll_objective_first_step_loss():
    ds = make_dataset()
    warp = bent_warp(seed=8)
    expected0, _ = warped_mll_loss_and_grad(ds, HP, copy.deepcopy(warp))
    cfg = WarpTrainConfig(objective="mll", steps=2)
    result = train_warp(ds, HP, warp, cfg)
    assert result.loss_trace[0] == expected0
    assert result.loss_trace.shape == (2,)


def test_train_config_validation():
    with pytest.raises(DomainError):
        WarpTrainConfig(objective="elbo")
    with pytest.raises(DomainError):
        WarpTrainConfig(n_probes=0)
