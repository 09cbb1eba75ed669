"""GP regression against dense linear-algebra oracles."""

import numpy as np
import pytest

from conftest import central_diff, make_dataset
from warpal.exceptions import (DomainError, DuplicatePointError, ShapeError,
                               ValidationError)
from warpal.gp import (Dataset, GPHyperparams, chol_with_jitter, condition,
                       fit_hyperparams, mll, mll_grad, posterior,
                       posterior_batch, posterior_mean_grad,
                       posterior_mean_grad_batch)
from warpal.kernels import kernel_matrix

LOG_2PI = np.log(2.0 * np.pi)


def dense_posterior(dataset, hp, Xs):
    """Posterior by direct np.linalg.solve on raw targets, zero mean."""
    K = kernel_matrix(dataset.X, dataset.X, hp)
    K_noisy = K + hp.noise_variance * np.eye(dataset.n)
    Ks = kernel_matrix(Xs, dataset.X, hp)
    mu = Ks @ np.linalg.solve(K_noisy, dataset.y)
    var = hp.signal_variance - np.sum(Ks * np.linalg.solve(K_noisy, Ks.T).T,
                                      axis=1)
    return mu, var


def dense_mll(dataset, hp):
    K = kernel_matrix(dataset.X, dataset.X, hp)
    K_noisy = K + hp.noise_variance * np.eye(dataset.n)
    _, logdet = np.linalg.slogdet(K_noisy)
    quad = dataset.y @ np.linalg.solve(K_noisy, dataset.y)
    return -0.5 * quad - 0.5 * logdet - 0.5 * dataset.n * LOG_2PI


def test_posterior_matches_dense_solve(dataset_2d, hp_2d):
    state = condition(dataset_2d, hp_2d, standardize=False)
    Xs = np.random.default_rng(1).uniform(0, 1, (40, 2))
    mu, var = posterior_batch(state, Xs)
    mu_ref, var_ref = dense_posterior(dataset_2d, hp_2d, Xs)
    assert np.allclose(mu, mu_ref, rtol=1e-9, atol=1e-11)
    assert np.allclose(var, var_ref, rtol=1e-8, atol=1e-11)


def test_mll_matches_dense_solve(dataset_2d, hp_2d):
    value = mll(dataset_2d, hp_2d, standardize=False)
    assert value == pytest.approx(dense_mll(dataset_2d, hp_2d), rel=1e-10)


def test_standardization_equals_manual_rescale(dataset_2d, hp_2d):
    # standardize=True must equal conditioning on (y - mean)/std with
    # standardize=False and mapping the moments back by hand.
    y_mean, y_std = dataset_2d.y.mean(), dataset_2d.y.std()
    manual = Dataset(dataset_2d.X, (dataset_2d.y - y_mean) / y_std)
    Xs = np.random.default_rng(2).uniform(0, 1, (25, 2))
    mu_s, var_s = posterior_batch(condition(dataset_2d, hp_2d), Xs)
    mu_m, var_m = posterior_batch(condition(manual, hp_2d, standardize=False),
                                  Xs)
    assert np.allclose(mu_s, y_mean + y_std * mu_m, rtol=1e-12)
    assert np.allclose(var_s, y_std ** 2 * var_m, rtol=1e-12)


def test_posterior_batch_matches_single(dataset_2d, hp_2d):
    state = condition(dataset_2d, hp_2d)
    Xs = np.random.default_rng(3).uniform(0, 1, (10, 2))
    mu, var = posterior_batch(state, Xs)
    for i, x in enumerate(Xs):
        m, v = posterior(state, x)
        assert m == pytest.approx(mu[i], rel=1e-13)
        assert v == pytest.approx(var[i], rel=1e-13)


def test_observation_noise_adds_noise_variance(dataset_2d, hp_2d):
    state = condition(dataset_2d, hp_2d)
    Xs = np.random.default_rng(4).uniform(0, 1, (6, 2))
    _, var_latent = posterior_batch(state, Xs)
    _, var_obs = posterior_batch(state, Xs, observation_noise=True)
    expected = var_latent + hp_2d.noise_variance * state.y_std ** 2
    assert np.allclose(var_obs, expected, rtol=1e-12)


def test_tiny_noise_interpolates():
    ds = make_dataset(n=10, d=1, seed=5, noise=0.0)
    hp = GPHyperparams(np.array([0.3]), 1.0, 1e-10)
    state = condition(ds, hp)
    mu, _ = posterior_batch(state, ds.X)
    assert np.allclose(mu, ds.y, atol=1e-4)


def test_mll_grad_matches_finite_differences(dataset_2d, hp_2d):
    z0 = hp_2d.log_vector()

    def f(z):
        return mll(dataset_2d, GPHyperparams.from_log_vector(z, 2))

    g = mll_grad(dataset_2d, hp_2d)
    g_fd = central_diff(f, z0, h=1e-5)
    assert np.allclose(g, g_fd, rtol=1e-6, atol=1e-8)


def test_posterior_mean_grad_matches_finite_differences(dataset_2d, hp_2d):
    state = condition(dataset_2d, hp_2d)
    x0 = np.array([0.41, 0.57])

    def f(x):
        return posterior(state, x)[0]

    g = posterior_mean_grad(state, x0)
    assert np.allclose(g, central_diff(f, x0, h=1e-6), rtol=1e-6, atol=1e-9)
    G = posterior_mean_grad_batch(state, x0[None, :])
    assert np.allclose(G[0], g, rtol=1e-13)


def test_fit_improves_likelihood(dataset_2d):
    init = GPHyperparams.default(2)
    result = fit_hyperparams(dataset_2d, init=init)
    assert result.mll >= mll(dataset_2d, init) - 1e-9
    assert isinstance(result.converged, (bool, np.bool_))
    assert result.n_evals > 0
    refit = fit_hyperparams(dataset_2d, init=result.hyperparams)
    assert refit.mll >= result.mll - 1e-6


def test_hyperparams_log_roundtrip():
    hp = GPHyperparams(np.array([0.2, 0.8, 0.5]), 2.0, 3e-4)
    back = GPHyperparams.from_log_vector(hp.log_vector(), 3)
    assert np.allclose(back.lengthscales, hp.lengthscales, rtol=1e-15)
    assert back.signal_variance == pytest.approx(hp.signal_variance)
    assert back.noise_variance == pytest.approx(hp.noise_variance)
    with pytest.raises(ShapeError):
        GPHyperparams.from_log_vector(hp.log_vector(), 4)
    with pytest.raises(DomainError):
        GPHyperparams(np.array([-0.1]), 1.0, 1e-3)
    with pytest.raises(DomainError):
        GPHyperparams(np.array([0.3]), 1.0, 0.0)


def test_dataset_validation():
    X = np.array([[0.1, 0.2], [0.4, 0.5]])
    with pytest.raises(ValidationError):
        Dataset(np.array([[0.1, 1.2], [0.3, 0.4]]), np.zeros(2))
    with pytest.raises(DuplicatePointError):
        Dataset(np.array([[0.1, 0.2], [0.1, 0.2]]), np.zeros(2))
    with pytest.raises((ShapeError, ValidationError)):
        Dataset(X, np.zeros(3))
    ds = Dataset(X, np.array([1.0, 2.0]))
    grown = ds.append(np.array([[0.9, 0.9]]), 3.0)
    assert grown.n == 3 and ds.n == 2
    with pytest.raises(DuplicatePointError):
        grown.append(np.array([[0.9, 0.9]]), 4.0)


def test_chol_with_jitter_recovers():
    # A singular Gram matrix must factor after escalating jitter.
    K = np.ones((4, 4))
    L, jitter = chol_with_jitter(K)
    assert jitter > 0
    assert np.allclose(L @ L.T, K + jitter * np.eye(4), atol=1e-12)


def test_condition_rejects_mismatched_dims(dataset_2d):
    with pytest.raises(ShapeError):
        condition(dataset_2d, GPHyperparams(np.array([0.3]), 1.0, 1e-3))
