"""AdamW against an independent reference; projected L-BFGS behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpal.exceptions import DomainError
from warpal.optimizers import (AdamWConfig, AdamWState, adamw_step,
                               clip_global_norm, lbfgs_maximize)


class ReferenceAdamW:
    """Textbook AdamW, written without looking at the production code.

    Decoupled weight decay; bias-corrected moments; gradient clipped to
    a maximum global Euclidean norm before the moment updates.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.01, clip=2.0):
        self.lr, self.b1, self.b2 = lr, beta1, beta2
        self.eps, self.wd, self.clip = eps, weight_decay, clip
        self.m = self.v = None
        self.t = 0

    def step(self, p, g, lr=None):
        lr = self.lr if lr is None else lr
        if self.m is None:
            self.m = np.zeros_like(p)
            self.v = np.zeros_like(p)
        norm = np.sqrt(np.sum(g * g))
        if self.clip is not None and norm > self.clip:
            g = g * (self.clip / norm)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return p - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.wd * p)


def test_adamw_trajectory_matches_reference():
    # 100 steps over a fixed gradient sequence, atol 1e-10.
    rng = np.random.default_rng(42)
    n = 7
    p = rng.standard_normal(n)
    p_ref = p.copy()
    state = AdamWState.zeros(n)
    cfg = AdamWConfig()
    ref = ReferenceAdamW()
    for step in range(100):
        g = rng.standard_normal(n) * (1.0 + 3.0 * (step % 5 == 0))
        lr = 1e-3 * 0.5 ** (step // 50)
        p = adamw_step(p, g, state, cfg, learning_rate=lr)
        p_ref = ref.step(p_ref, g, lr=lr)
        np.testing.assert_allclose(p, p_ref, atol=1e-10, rtol=0)


def test_adamw_zero_gradient_zero_decay_is_noop():
    cfg = AdamWConfig(weight_decay=0.0)
    p = np.array([0.3, -1.2])
    out = adamw_step(p, np.zeros(2), AdamWState.zeros(2), cfg)
    assert np.array_equal(out, p)


def test_adamw_first_step_closed_form():
    # Unit gradient, first step: update is -lr * g / (|g| + eps) = -lr-ish.
    cfg = AdamWConfig(weight_decay=0.0, clip_norm=None)
    out = adamw_step(np.zeros(1), np.ones(1), AdamWState.zeros(1), cfg)
    expected = -cfg.learning_rate / (1.0 + cfg.eps)
    assert out[0] == pytest.approx(expected, rel=1e-12)


def test_adamw_state_advances():
    state = AdamWState.zeros(3)
    cfg = AdamWConfig()
    p = np.zeros(3)
    for _ in range(4):
        p = adamw_step(p, np.ones(3), state, cfg)
    assert state.t == 4
    assert np.all(state.v > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_clip_global_norm_property(seed, max_norm):
    g = np.random.default_rng(seed).standard_normal(6) * 5.0
    clipped, norm = clip_global_norm(g, max_norm)
    assert norm == pytest.approx(np.linalg.norm(g), rel=1e-12)
    assert np.linalg.norm(clipped) <= max_norm + 1e-12
    if norm <= max_norm:
        assert np.array_equal(clipped, g)
    else:
        # direction preserved
        assert np.allclose(clipped / np.linalg.norm(clipped),
                           g / norm, rtol=1e-10)


def test_clip_none_disables():
    g = np.full(4, 100.0)
    clipped, _ = clip_global_norm(g, None)
    assert np.array_equal(clipped, g)


def test_lbfgs_maximize_concave_quadratic():
    center = np.array([0.3, 0.7])

    def f_and_grad(X):
        diff = X - center
        return -np.sum(diff ** 2, axis=1), -2.0 * diff

    X0 = np.random.default_rng(0).uniform(0, 1, (8, 2))
    res = lbfgs_maximize(f_and_grad, X0)
    assert np.allclose(res.x, center, atol=1e-6)
    assert res.value == pytest.approx(0.0, abs=1e-10)
    assert res.best_trace.size == res.n_iterations
    assert np.all(np.diff(res.best_trace) >= 0)
    assert res.best_trace[-1] == res.value


def test_lbfgs_projects_onto_box():
    # Maximum outside the box: solution must sit on the boundary.
    def f_and_grad(X):
        return X[:, 0] + 2.0 * X[:, 1], np.tile([1.0, 2.0], (X.shape[0], 1))

    res = lbfgs_maximize(f_and_grad, np.full((3, 2), 0.5))
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-9)


def test_lbfgs_never_below_best_candidate():
    rng = np.random.default_rng(5)
    X0 = rng.uniform(0, 1, (12, 3))

    def f_and_grad(X):
        v = -np.sum((X - 0.5) ** 2, axis=1)
        return v, -2.0 * (X - 0.5)

    res = lbfgs_maximize(f_and_grad, X0, max_steps=1)
    raw_best = f_and_grad(X0)[0].max()
    assert res.value >= raw_best - 1e-15


def test_lbfgs_rejects_empty_batch():
    with pytest.raises(DomainError):
        lbfgs_maximize(lambda X: (np.zeros(0), X), np.zeros((0, 2)))


def test_lbfgs_freezes_nonfinite_candidates():
    # One candidate returns NaN everywhere; the other must still converge.
    def f_and_grad(X):
        v = -np.sum((X - 0.4) ** 2, axis=1)
        g = -2.0 * (X - 0.4)
        bad = X[:, 0] > 0.9
        v[bad] = np.nan
        g[bad] = np.nan
        return v, g

    X0 = np.array([[0.95, 0.5], [0.2, 0.2]])
    res = lbfgs_maximize(f_and_grad, X0)
    assert np.isfinite(res.value)
    assert np.allclose(res.x, [0.4, 0.4], atol=1e-6)