import numpy as np
import pytest

from mbrl_game.errors import CheckpointError
from mbrl_game.nn import (
    AdamState,
    Mlp,
    adam_step,
    gaussian_kl_diag,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    load_flat,
    load_mlp,
    save_mlp,
)


def numeric_param_grad(net: Mlp, x: np.ndarray, upstream: np.ndarray, h: float = 1e-6) -> np.ndarray:
    theta = net.flatten()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] += h
        plus = np.sum(upstream * net.copy().unflatten(bumped)(x))
        bumped[i] -= 2 * h
        minus = np.sum(upstream * net.copy().unflatten(bumped)(x))
        grad[i] = (plus - minus) / (2 * h)
    return grad


def test_flatten_unflatten_roundtrip(rng):
    net = Mlp([3, 5, 2], rng=rng)
    theta = rng.standard_normal(net.n_params)
    assert np.array_equal(net.unflatten(theta).flatten(), theta)


def test_zero_parameters_give_zero_output(rng):
    net = Mlp([4, 8, 8, 3], rng=rng)
    net.unflatten(np.zeros(net.n_params))
    assert np.all(net(rng.standard_normal((5, 4))) == 0.0)


def test_single_vector_input(rng):
    net = Mlp([3, 4, 2], rng=rng)
    x = rng.standard_normal(3)
    assert net(x).shape == (2,)
    np.testing.assert_array_equal(net(x), net(x[None])[0])


def test_input_dimension_checked(rng):
    with pytest.raises(ValueError):
        Mlp([3, 2], rng=rng)(np.zeros(4))


@pytest.mark.parametrize("sizes", [[2, 3], [3, 6, 2], [4, 5, 5, 3]])
def test_backward_matches_finite_differences(rng, sizes):
    net = Mlp(sizes, activation="tanh", rng=rng)
    x = rng.standard_normal((7, sizes[0]))
    upstream = rng.standard_normal((7, sizes[-1]))
    grad, _ = net.backward(x, upstream)
    expected = numeric_param_grad(net, x, upstream)
    rel = np.linalg.norm(grad - expected) / max(np.linalg.norm(expected), 1e-12)
    assert rel < 1e-5


def test_input_gradient_matches_finite_differences(rng):
    net = Mlp([3, 6, 2], rng=rng)
    x = rng.standard_normal(3)
    upstream = rng.standard_normal(2)
    _, input_grad = net.backward(x, upstream)
    h = 1e-6
    expected = np.array([
        (np.sum(upstream * net(x + h * e)) - np.sum(upstream * net(x - h * e))) / (2 * h)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(input_grad, expected, atol=1e-7)


def test_jvp_matches_finite_differences(rng):
    net = Mlp([3, 6, 6, 2], rng=rng)
    x = rng.standard_normal((4, 3))
    direction = rng.standard_normal(net.n_params)
    theta, h = net.flatten(), 1e-6
    plus = net.copy().unflatten(theta + h * direction)(x)
    minus = net.copy().unflatten(theta - h * direction)(x)
    np.testing.assert_allclose(net.jvp(x, direction), (plus - minus) / (2 * h), atol=1e-6)


def test_adam_zero_gradient_leaves_params():
    state = AdamState(3)
    params = np.array([1.0, -2.0, 0.5])
    for _ in range(5):
        params = adam_step(state, params, np.zeros(3))
    np.testing.assert_array_equal(params, [1.0, -2.0, 0.5])


def test_adam_first_step_moves_by_lr():
    state = AdamState(2, lr=1e-3)
    params = adam_step(state, np.zeros(2), np.array([5.0, -0.3]))
    np.testing.assert_allclose(np.abs(params), [1e-3, 1e-3], rtol=1e-6)
    assert state.step == 1


def test_adam_minimizes_quadratic():
    state = AdamState(3, lr=0.01)
    params = np.ones(3)
    for _ in range(1000):
        params = adam_step(state, params, 2.0 * params)
    assert float(np.sum(params ** 2)) < 1e-3


def test_adam_rejects_non_finite_gradient():
    with pytest.raises(FloatingPointError):
        adam_step(AdamState(2), np.zeros(2), np.array([np.nan, 0.0]))


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState(2), np.zeros(2), np.zeros(3))


def test_gaussian_log_prob_grads_match_finite_differences(rng):
    x, mean, log_std = rng.standard_normal((3, 4))
    d_mean, d_log_std = gaussian_log_prob_grads(x, mean, log_std)
    h = 1e-6
    for i in range(4):
        e = np.eye(4)[i] * h
        fd_mean = (gaussian_log_prob(x, mean + e, log_std) - gaussian_log_prob(x, mean - e, log_std)) / (2 * h)
        fd_std = (gaussian_log_prob(x, mean, log_std + e) - gaussian_log_prob(x, mean, log_std - e)) / (2 * h)
        assert d_mean[i] == pytest.approx(fd_mean, abs=1e-6)
        assert d_log_std[i] == pytest.approx(fd_std, abs=1e-6)


def test_gaussian_kl_diag_zero_for_identical(rng):
    mean, log_std = rng.standard_normal((2, 3))
    assert gaussian_kl_diag(mean, log_std, mean, log_std) == pytest.approx(0.0, abs=1e-12)


def test_mlp_checkpoint_roundtrip(tmp_path, rng):
    net = Mlp([3, 4, 2], activation="relu", rng=rng)
    save_mlp(tmp_path / "net", net, note="value baseline")
    loaded, header = load_mlp(tmp_path / "net")
    assert header["note"] == "value baseline"
    assert loaded.activation == "relu"
    x = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(loaded(x), net(x))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_flat(tmp_path / "nothing")
