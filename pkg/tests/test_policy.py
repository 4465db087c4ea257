import math

import numpy as np
import pytest
from scipy import integrate

from mbrl_game.config import EnvConfig, NpgConfig
from mbrl_game.dynamics import PerfectModel
from mbrl_game.envs import Env, Trajectory, make_env
from mbrl_game.mdp import exact_policy_value
from mbrl_game.policy import (
    CategoricalPolicy,
    GaussianPolicy,
    SyntheticBatch,
    ValueNet,
    conjugate_gradient,
    fisher_vector_product,
    fit_value,
    gae_advantages,
    load_policy,
    npg_iteration,
    npg_step,
    policy_gradient,
    save_policy,
    synthetic_rollouts,
)
from mbrl_game.verify import export_policy


def three_step_batch() -> SyntheticBatch:
    trajectory = Trajectory(
        states=np.array([[0.0], [1.0], [2.0]]),
        actions=np.zeros((3, 1)),
        rewards=np.array([1.0, 2.0, 3.0]),
        next_states=np.array([[1.0], [2.0], [3.0]]),
        dones=np.zeros(3, dtype=bool),
    )
    return SyntheticBatch.from_trajectories([trajectory])


def half_state(states):
    return 0.5 * states[:, 0]


def zero_value(states):
    return np.zeros(states.shape[0])


def test_gae_lambda_zero_is_td_error():
    advantages, _ = gae_advantages(three_step_batch(), half_state, gamma=0.9, lam=0.0)
    np.testing.assert_allclose(advantages[0], [1.45, 2.4, 3.35])


def test_gae_lambda_one_zero_baseline_is_return_to_go():
    advantages, targets = gae_advantages(three_step_batch(), zero_value, gamma=0.9, lam=1.0)
    expected = [1 + 0.9 * 2 + 0.81 * 3, 2 + 0.9 * 3, 3.0]
    np.testing.assert_allclose(advantages[0], expected)
    np.testing.assert_allclose(targets[0], expected)


def test_gae_hand_computed():
    advantages, targets = gae_advantages(three_step_batch(), half_state, gamma=0.9, lam=0.5)
    np.testing.assert_allclose(advantages[0], [3.208375, 3.9075, 3.35])
    np.testing.assert_allclose(targets[0], [3.208375, 4.4075, 4.35])


def test_gae_ignores_padding():
    short = Trajectory(np.zeros((1, 1)), np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)), np.zeros(1, dtype=bool))
    long = Trajectory(np.zeros((3, 1)), np.zeros((3, 1)), np.ones(3), np.zeros((3, 1)), np.zeros(3, dtype=bool))
    batch = SyntheticBatch.from_trajectories([short, long])
    advantages, targets = gae_advantages(batch, zero_value, gamma=0.9, lam=1.0)
    assert advantages[0].tolist() == [1.0, 0.0, 0.0]
    assert targets[0, 1:].tolist() == [0.0, 0.0]


def test_identity_fisher_step():
    step, info = npg_step(np.array([3.0, 4.0]), lambda v: v, step_size=0.05)
    np.testing.assert_allclose(step, [0.134164, 0.178885], atol=1e-6)
    assert info.quadratic_form == pytest.approx(0.05)
    assert not info.cg_breakdown


def test_zero_gradient_step_is_skipped():
    step, info = npg_step(np.zeros(3), lambda v: v, step_size=0.05)
    assert info.skipped
    assert np.all(step == 0.0)


def test_conjugate_gradient_solves_spd(rng):
    root = rng.standard_normal((5, 5))
    A = root @ root.T + 0.5 * np.eye(5)
    b = rng.standard_normal(5)
    x, breakdown = conjugate_gradient(lambda v: A @ v, b, iterations=25, residual_tol=1e-20)
    assert not breakdown
    np.testing.assert_allclose(A @ x, b, atol=1e-8)


def test_conjugate_gradient_flags_negative_curvature():
    _, breakdown = conjugate_gradient(lambda v: -v, np.ones(3))
    assert breakdown


def test_categorical_fisher_matches_exact_expectation(rng):
    policy = CategoricalPolicy(3, 4, hidden=(5,), rng=rng)
    policy.set_flat(rng.standard_normal(policy.n_params) * 0.5)
    states = rng.standard_normal((6, 3))
    v = rng.standard_normal(policy.n_params)

    expected = np.zeros(policy.n_params)
    for s in states:
        probs = policy.action_probs(s)[0]
        for a, p in enumerate(probs):
            g = policy.score(s[None], np.eye(4)[a][None], np.ones(1))
            expected += p * g * (g @ v)
    expected /= len(states)
    np.testing.assert_allclose(policy.fisher_vector_product(states, v), expected, atol=1e-10)


def test_gaussian_fisher_matches_dense_jacobian(rng):
    policy = GaussianPolicy(2, 2, hidden=(4,), init_log_std=-0.5, rng=rng)
    policy.set_flat(rng.standard_normal(policy.n_params) * 0.5)
    states = rng.standard_normal((5, 2))
    n = policy.net.n_params
    theta, h = policy.get_flat(), 1e-6

    jacobians = np.zeros((len(states), 2, n))
    for i in range(n):
        bumped = theta.copy()
        bumped[i] += h
        policy.set_flat(bumped)
        plus = policy.mean(states)
        bumped[i] -= 2 * h
        policy.set_flat(bumped)
        minus = policy.mean(states)
        jacobians[:, :, i] = (plus - minus) / (2 * h)
    policy.set_flat(theta)

    precision = np.diag(np.exp(-2.0 * policy.log_std))
    dense = np.zeros((policy.n_params, policy.n_params))
    dense[:n, :n] = np.mean([J.T @ precision @ J for J in jacobians], axis=0)
    dense[n:, n:] = 2.0 * np.eye(2)
    v = rng.standard_normal(policy.n_params)
    np.testing.assert_allclose(policy.fisher_vector_product(states, v), dense @ v, atol=1e-6)


def test_damping_is_additive(rng):
    policy = GaussianPolicy(3, 1, hidden=(4,), rng=rng)
    states = rng.standard_normal((8, 3))
    v = rng.standard_normal(policy.n_params)
    damped = fisher_vector_product(policy, states, v, damping=0.1)
    plain = fisher_vector_product(policy, states, v, damping=0.0)
    np.testing.assert_allclose(damped - plain, 0.1 * v, atol=1e-12)


def test_policy_gradient_zero_advantages(rng):
    policy = GaussianPolicy(2, 1, hidden=(4,), rng=rng)
    states = rng.standard_normal((10, 2))
    g = policy_gradient(states, policy.sample(states, rng), np.zeros(10), policy)
    assert np.all(g == 0.0)


def test_policy_gradient_moves_mean_toward_good_actions(rng):
    policy = GaussianPolicy(1, 1, hidden=(), rng=rng)
    states = np.ones((20, 1))
    actions = policy.mean(states) + 0.5
    g = policy_gradient(states, actions, np.ones(20), policy, normalize=False)
    before = policy.mean(states[:1])[0, 0]
    policy.set_flat(policy.get_flat() + 1e-3 * g)
    assert policy.mean(states[:1])[0, 0] > before


def test_policy_gradient_matches_common_noise_finite_differences(rng):
    policy = GaussianPolicy(1, 1, hidden=(), rng=rng)
    n = 200_000
    states = np.ones((n, 1))
    noise = rng.standard_normal((n, 1))

    def objective(theta):
        policy.set_flat(theta)
        actions = policy.mean(states) + np.exp(policy.log_std) * noise
        return float(np.mean(-(actions - 1.0) ** 2))

    theta = policy.get_flat()
    actions = policy.mean(states) + np.exp(policy.log_std) * noise
    returns = -(actions[:, 0] - 1.0) ** 2
    g = policy_gradient(states, actions, returns - returns.mean(), policy, normalize=False)

    h = 1e-5
    fd = np.array([
        (objective(theta + h * e) - objective(theta - h * e)) / (2 * h)
        for e in np.eye(theta.size)
    ])
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-2


def test_fit_value_on_constant_targets(rng):
    value = ValueNet(2, hidden=(16,), lr=1e-2, rng=rng)
    states = rng.standard_normal((256, 2))
    result = fit_value(value, states, np.full(256, 3.0), epochs=300, minibatch=64, rng=rng)
    assert result.mse < 1e-3


def test_fit_value_rejects_non_finite_targets(rng):
    value = ValueNet(2, hidden=(4,), rng=rng)
    with pytest.raises(ValueError):
        fit_value(value, np.zeros((3, 2)), np.array([0.0, np.inf, 1.0]), 1, 2, rng)


def grid_setup(**npg):
    env = make_env("gridworld-goal", seed=0, config=EnvConfig(grid_size=4, horizon=8))
    cfg = NpgConfig(n_traj=6, policy_hidden=(8,), value_hidden=(8,), value_epochs=1, **npg)
    policy = CategoricalPolicy(env.state_dim, env.action_dim, cfg.policy_hidden, rng=np.random.default_rng(1))
    value = ValueNet(env.state_dim, cfg.value_hidden, rng=np.random.default_rng(2))
    return env, cfg, policy, value


def test_synthetic_rollout_shapes():
    env, cfg, policy, _ = grid_setup(max_rollout_horizon=3)
    starts = env.sample_initial_states(5, np.random.default_rng(0))
    batch = synthetic_rollouts(policy, PerfectModel(env), env, starts, cfg, np.random.default_rng(0))
    assert batch.rewards.shape == (5, 3)
    assert batch.n_samples == 15
    assert not batch.diverged.any()


def test_zero_step_size_leaves_policy_unchanged():
    env, cfg, policy, value = grid_setup(step_size=0.0)
    before = policy.get_flat()
    npg_iteration(policy, value, PerfectModel(env), env, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(policy.get_flat(), before)


def test_npg_iteration_takes_normalized_step():
    env, cfg, policy, value = grid_setup()
    stats = npg_iteration(policy, value, PerfectModel(env), env, cfg, np.random.default_rng(0))
    if stats.grad_norm > 0:
        assert stats.quadratic_form == pytest.approx(cfg.step_size, rel=1e-6)
    assert stats.n_samples == cfg.n_traj * env.horizon


def test_npg_iteration_is_seeded():
    results = []
    for _ in range(2):
        env, cfg, policy, value = grid_setup()
        npg_iteration(policy, value, PerfectModel(env), env, cfg, np.random.default_rng([4, 2]))
        results.append(policy.get_flat())
    np.testing.assert_array_equal(results[0], results[1])


def test_policy_checkpoint_roundtrip(tmp_path, rng):
    for policy in (GaussianPolicy(3, 2, hidden=(4,), rng=rng), CategoricalPolicy(3, 5, hidden=(4,), rng=rng)):
        save_policy(tmp_path / policy.kind, policy)
        loaded = load_policy(tmp_path / policy.kind)
        assert loaded.kind == policy.kind
        np.testing.assert_array_equal(loaded.get_flat(), policy.get_flat())


def test_gaussian_sampling_matches_its_density(rng):
    policy = GaussianPolicy(2, 1, hidden=(4,), rng=rng)
    assert policy.log_std.tolist() == [-1.0]
    state = np.array([[0.3, -0.8]])
    mean, std = policy.mean(state)[0, 0], math.exp(-1.0)

    mass, _ = integrate.quad(lambda a: math.exp(policy.log_prob(state, [[a]])[0]), mean - 12 * std, mean + 12 * std)
    assert mass == pytest.approx(1.0, abs=1e-8)

    n = 100_000
    samples = policy.sample(np.repeat(state, n, axis=0), rng)[:, 0]
    assert abs(samples.mean() - mean) <= 3 * std / math.sqrt(n)
    assert samples.std() == pytest.approx(std, rel=0.01)


def test_expected_score_vanishes(rng):
    policy = GaussianPolicy(1, 1, hidden=(), rng=rng)
    policy.set_flat(np.array([0.4, -0.2, -0.5]))
    batches, size = 100, 1000
    states = np.ones((size, 1))
    means = np.array([
        policy.score(states, policy.sample(states, rng), np.ones(size)) / size for _ in range(batches)
    ])
    se = means.std(axis=0, ddof=1) / math.sqrt(batches)
    assert np.all(np.abs(means.mean(axis=0)) <= 4 * se)


def test_fit_value_on_linear_targets(rng):
    value = ValueNet(2, hidden=(), lr=1e-2, rng=rng)
    states = rng.standard_normal((256, 2))
    targets = states @ np.array([0.5, -1.2]) + 0.3
    result = fit_value(value, states, targets, epochs=500, minibatch=64, rng=rng)
    assert result.mse < 1e-6
    assert result.explained_variance == pytest.approx(1.0, abs=1e-6)


def test_perfect_model_return_matches_exact_value():
    env = make_env("gridworld-goal", config=EnvConfig(grid_size=4, horizon=120, fixed_goal=(1, 2)))
    cfg = NpgConfig(gamma=0.8)
    policy = CategoricalPolicy(env.state_dim, env.action_dim, hidden=(8,), rng=np.random.default_rng(3))
    policy.set_flat(0.5 * np.random.default_rng(4).standard_normal(policy.n_params))

    rng = np.random.default_rng(5)
    starts = env.sample_initial_states(1000, rng)
    returns = synthetic_rollouts(policy, PerfectModel(env), env, starts, cfg, rng).discounted_returns(cfg.gamma)

    mdp = env.to_tabular((1, 2), cfg.gamma)
    _, exact = exact_policy_value(mdp, export_policy(env, policy, (1, 2)))
    assert abs(returns.mean() - exact) <= 3 * returns.std(ddof=1) / math.sqrt(returns.size)


class TwoWorlds:
    """Member 0 jumps straight to the goal, member 1 never moves."""

    n_members = 2

    def __init__(self, env):
        self.env = env

    def predict(self, states, actions, member=0):
        if member == 1:
            return states.copy()
        return self.env.encode(self.env.goal_cells(states), self.env.goals(states))


def test_worst_case_mode_trains_on_the_worst_member():
    env, cfg, policy, value = grid_setup(ensemble_mode="worst_case")
    stats = npg_iteration(policy, value, TwoWorlds(env), env, cfg, np.random.default_rng(0))
    assert stats.members_used == [1]
    assert stats.n_samples == cfg.n_traj * env.horizon
    assert stats.mean_synthetic_return > 0.0

    env, cfg, policy, value = grid_setup()
    stats = npg_iteration(policy, value, TwoWorlds(env), env, cfg, np.random.default_rng(0))
    assert stats.members_used == [0, 1]
    assert stats.n_samples == 2 * cfg.n_traj * env.horizon


class Bandit(Env):
    """One state, one step, reward -(a - 0.7)^2."""

    name = "bandit"
    state_dim = 1
    action_dim = 1

    def __init__(self):
        super().__init__(EnvConfig(name="point-reacher", horizon=1))

    @property
    def reward_bounds(self):
        return (-4.0, 0.0)

    def sample_initial_states(self, n, rng):
        return np.ones((n, 1))

    def expected_next_state(self, states, actions):
        return np.atleast_2d(states).copy()

    def reward(self, states, actions, next_states):
        return -(np.atleast_2d(actions)[:, 0] - 0.7) ** 2


def test_npg_solves_a_one_state_bandit():
    env = Bandit()
    cfg = NpgConfig(value_hidden=(8,))
    policy = GaussianPolicy(1, 1, hidden=(), rng=np.random.default_rng(0))
    value = ValueNet(1, cfg.value_hidden, rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    for _ in range(100):
        npg_iteration(policy, value, PerfectModel(env), env, cfg, rng)
    assert policy.mean(np.ones((1, 1)))[0, 0] == pytest.approx(0.7, abs=1e-2)
