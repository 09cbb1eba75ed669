"""Warp families: identity at init, monotonicity, exact derivatives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff
from warpal.exceptions import DomainError, ShapeError
from warpal.warps import (CRQSWarp, IdentityWarp, KumaraswamyWarp,
                          RQSBinParams, kumaraswamy_forward, make_warp,
                          raw_to_bins, rqs_forward, rqs_forward_raw, warp_from_dict,
                          warp_from_json)

KINDS = ("identity", "kumaraswamy", "crqs")


def small_warp(kind, n_dims=2, seed=0):
    warp = make_warp(kind, n_dims, n_bins=4, n_layers=2, hidden_units=8,
                     random_state=seed)
    rng = np.random.default_rng(seed + 100)
    if warp.n_params:
        warp.set_phi(0.3 * rng.standard_normal(warp.n_params))
    return warp


@pytest.mark.parametrize("kind", KINDS)
def test_fresh_warp_is_identity(kind):
    warp = make_warp(kind, 2, random_state=0)
    X = np.random.default_rng(0).uniform(0, 1, (200, 2))
    assert np.max(np.abs(warp.transform(X) - X)) <= 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_endpoints_pinned(kind):
    warp = small_warp(kind)
    corners = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    Y = warp.transform(corners)
    assert np.array_equal(Y, corners)


@pytest.mark.parametrize("kind", ("kumaraswamy", "crqs"))
def test_monotone_along_axes(kind):
    warp = small_warp(kind)
    t = np.linspace(0.0, 1.0, 501)
    for axis in range(2):
        for level in (0.2, 0.8):
            X = np.full((t.size, 2), level)
            X[:, axis] = t
            y = warp.transform(X)[:, axis]
            assert np.all(np.diff(y) > 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_input_jacobian_matches_fd(kind):
    warp = small_warp(kind)
    X = np.random.default_rng(1).uniform(0.05, 0.95, (7, 2))
    Y, J = warp.input_jacobian(X)
    assert np.allclose(Y, warp.transform(X), rtol=1e-14)
    h = 1e-6
    for i in range(X.shape[0]):
        for k in range(2):
            xp, xm = X[i].copy(), X[i].copy()
            xp[k] += h
            xm[k] -= h
            col = (warp.transform(xp[None]) - warp.transform(xm[None]))[0] / (2 * h)
            assert np.allclose(J[i, :, k], col, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kind", ("kumaraswamy", "crqs"))
def test_param_vjp_matches_fd(kind):
    warp = small_warp(kind)
    X = np.random.default_rng(2).uniform(0.05, 0.95, (9, 2))
    cot = np.random.default_rng(3).standard_normal((9, 2))
    phi0 = warp.get_phi()

    def f(phi):
        warp.set_phi(phi)
        return float(np.sum(warp.transform(X) * cot))

    g_fd = central_diff(f, phi0, h=1e-6)
    warp.set_phi(phi0)
    _, g = warp.param_vjp(X, cot)
    assert np.allclose(g, g_fd, rtol=2e-4, atol=1e-8)


@pytest.mark.parametrize("kind", ("kumaraswamy", "crqs"))
def test_cached_forward_agrees(kind):
    warp = small_warp(kind)
    X = np.random.default_rng(4).uniform(0, 1, (11, 2))
    cot = np.random.default_rng(5).standard_normal((11, 2))
    Y, cache = warp.forward_cached(X)
    assert np.array_equal(Y, warp.transform(X))
    Y2, g = warp.param_vjp(X, cot)
    assert np.array_equal(Y2, Y)
    assert np.allclose(warp.vjp_from_cache(cache, cot), g, rtol=1e-13)


def test_param_jacobian_single_point():
    warp = small_warp("crqs")
    x = np.array([0.3, 0.7])
    Jp = warp.param_jacobian(x)
    assert Jp.shape == (2, warp.n_params)
    for k in range(2):
        cot = np.zeros((1, 2))
        cot[0, k] = 1.0
        assert np.allclose(Jp[k], warp.param_vjp(x[None], cot)[1], rtol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_roundtrip(kind):
    warp = small_warp(kind)
    X = np.random.default_rng(6).uniform(0, 1, (20, 2))
    clone = warp_from_dict(warp.to_dict())
    assert np.array_equal(clone.transform(X), warp.transform(X))
    clone2 = warp_from_json(warp.to_json())
    assert np.array_equal(clone2.transform(X), warp.transform(X))


def test_n_params_layout():
    assert IdentityWarp(3).n_params == 0
    assert KumaraswamyWarp(3).n_params == 6
    crqs = make_warp("crqs", 1, n_bins=4, n_layers=2)
    # 1-D layers are unconditional: one raw spline vector of length 3K-1
    assert crqs.n_params == 2 * (3 * 4 - 1)


def test_set_phi_validates_size():
    warp = KumaraswamyWarp(2)
    with pytest.raises(ShapeError):
        warp.set_phi(np.zeros(3))
    with pytest.raises(ShapeError):
        small_warp("crqs").set_phi(np.zeros(1))


def test_make_warp_rejects_unknown_kind():
    with pytest.raises((DomainError, ValueError)):
        make_warp("cubic", 2)


def test_kumaraswamy_forward_formula():
    X = np.random.default_rng(7).uniform(0, 1, (30, 2))
    a = np.array([1.7, 0.6])
    b = np.array([0.9, 2.2])
    assert np.allclose(kumaraswamy_forward(X, a, b),
                       1.0 - (1.0 - X ** a) ** b, rtol=1e-15)
    with pytest.raises(DomainError):
        kumaraswamy_forward(X, np.array([0.0, 1.0]), b)


def test_rqs_identity_at_zero_raw():
    bins = raw_to_bins(np.zeros(11))
    for x in np.linspace(0, 1, 101):
        y, deriv = rqs_forward(x, bins)
        assert y == pytest.approx(x, abs=1e-14)
        assert deriv == pytest.approx(1.0, abs=1e-12)


def test_rqs_respects_floors():
    bins = raw_to_bins(np.array([50.0, 0, 0, 0, -50, 0, 0, 0, 0, 0, 0.0]))
    assert bins.widths.min() >= 1e-3 - 1e-15
    assert bins.heights.min() >= 1e-3 - 1e-15
    assert bins.derivs.min() >= 1e-3 - 1e-15
    assert bins.widths.sum() == pytest.approx(1.0, abs=1e-12)
    assert bins.heights.sum() == pytest.approx(1.0, abs=1e-12)


def test_rqs_bin_params_validation():
    with pytest.raises(ShapeError):
        RQSBinParams(np.full(4, 0.25), np.full(4, 0.25), np.ones(4))
    with pytest.raises(DomainError):
        RQSBinParams(np.array([0.5, 0.5]), np.array([0.9, 0.1]),
                     np.ones(3), min_bin=0.2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rqs_monotone_bijection_property(seed):
    rng = np.random.default_rng(seed)
    raw = 2.0 * rng.standard_normal(3 * 8 - 1)
    x = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 200)]))
    y, deriv, _ = rqs_forward_raw(x, np.broadcast_to(raw, (x.size, raw.size)), 8)
    assert np.all(np.diff(y) > 0)
    assert np.all(deriv > 0)
    assert np.all((y >= 0) & (y <= 1))
    assert y[0] == 0.0 and y[-1] == 1.0


def test_conditional_spline_monotone_per_layer():
    warp = small_warp("crqs", n_dims=3, seed=9)
    x = np.linspace(0, 1, 301)
    for layer_index, layer in enumerate(warp.layers_):
        conditioning = np.full(layer.a_idx.size, 0.37)
        xb = np.repeat(x[:, None], layer.b_idx.size, axis=1)
        y, dydx = warp.conditional_spline(layer_index, xb, conditioning)
        assert np.all(np.diff(y, axis=0) > 0)
        assert np.all(dydx > 0)
