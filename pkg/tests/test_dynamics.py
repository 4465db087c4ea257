import numpy as np
import pytest

from mbrl_game.config import EnvConfig
from mbrl_game.dynamics import (
    DynamicsEnsemble,
    Normalizer,
    PerfectModel,
    ReplayBuffer,
    beta_step,
    buffer_insert,
    split_holdout,
    train_ensemble,
)
from mbrl_game.envs import Transition, collect_rollouts, make_env
from mbrl_game.errors import ModelTrainingError


class UniformGridActions:
    def sample(self, states, rng):
        return np.eye(5)[rng.integers(0, 5, size=len(states))]


def linear_buffer(rng, n: int, capacity=None) -> ReplayBuffer:
    """s' = 0.9 s + 0.1 a on a 2-d state with 1-d actions."""
    states = rng.uniform(-1, 1, size=(n, 2))
    actions = rng.uniform(-1, 1, size=(n, 1))
    next_states = 0.9 * states + 0.1 * actions
    return ReplayBuffer(capacity).insert(
        Transition(s, a, 0.0, s2, False) for s, a, s2 in zip(states, actions, next_states)
    )


def test_buffer_evicts_oldest_first():
    buffer = ReplayBuffer(capacity=2500)
    buffer_insert(buffer, (Transition(np.array([float(i)]), np.zeros(1), 0.0, np.zeros(1), False) for i in range(3000)))
    assert len(buffer) == 2500
    states = buffer.as_arrays()["s"][:, 0]
    assert states[0] == 500.0
    assert states[-1] == 2999.0


def test_buffer_insert_nothing(rng):
    buffer = linear_buffer(rng, 10)
    buffer_insert(buffer, [])
    assert len(buffer) == 10


def test_buffer_rejects_bad_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)


def test_buffer_save_load(tmp_path, rng):
    buffer = linear_buffer(rng, 25)
    buffer.save(tmp_path / "buffer.jsonl")
    loaded = ReplayBuffer.load(tmp_path / "buffer.jsonl")
    np.testing.assert_array_equal(loaded.as_arrays()["s_next"], buffer.as_arrays()["s_next"])


def test_zero_output_predicts_no_change(rng):
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,), n_members=1)
    ensemble.normalizer = Normalizer.identity(2, 1)
    ensemble.members[0].unflatten(np.zeros(ensemble.members[0].n_params))
    states = rng.standard_normal((4, 2))
    np.testing.assert_array_equal(ensemble.predict(states, rng.standard_normal((4, 1))), states)


def test_zero_delta_scale_predicts_no_change(rng):
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,), n_members=1)
    ensemble.normalizer = Normalizer(np.zeros(2), np.ones(2), np.zeros(1), np.ones(1), np.zeros(2))
    states = rng.standard_normal((4, 2))
    np.testing.assert_array_equal(ensemble.predict(states, rng.standard_normal((4, 1))), states)


def test_predict_before_fit():
    with pytest.raises(ModelTrainingError):
        DynamicsEnsemble(2, 1, hidden=(8,)).predict(np.zeros((1, 2)), np.zeros((1, 1)))


def test_holdout_split_sizes(rng):
    train, hold = split_holdout(50, 0.1, rng)
    assert (train.size, hold.size) == (45, 5)
    assert set(train) | set(hold) == set(range(50))


def test_small_dataset_clamps_minibatch_and_steps(rng):
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,), n_members=2)
    history = train_ensemble(ensemble, linear_buffer(rng, 50), epochs=1, minibatch=200, min_steps=100)
    assert history.minibatch == 45
    assert history.steps == 100
    assert len(history.member_losses) == 2


def one_dim_buffer(rng, n: int) -> ReplayBuffer:
    """s' = 0.9 s + 0.1 a on a 1-d state."""
    states = rng.uniform(-1, 1, size=(n, 1))
    actions = rng.uniform(-1, 1, size=(n, 1))
    return ReplayBuffer().insert(
        Transition(s, a, 0.0, 0.9 * s + 0.1 * a, False) for s, a in zip(states, actions)
    )


def test_training_fits_linear_dynamics(rng):
    buffer = one_dim_buffer(rng, 1000)
    data = buffer.as_arrays()
    ensemble = DynamicsEnsemble(1, 1, hidden=(), n_members=1, lr=1e-2)
    ensemble.normalizer = Normalizer.fit(data["s"], data["a"], data["s_next"])
    before = ensemble.model_loss(0, data["s"], data["a"], data["s_next"])

    history = train_ensemble(ensemble, buffer, epochs=400, seed=1)
    assert ensemble.model_loss(0, data["s"], data["a"], data["s_next"]) < before
    assert history.holdout_loss is not None

    states = rng.uniform(-1, 1, size=(500, 1))
    actions = rng.uniform(-1, 1, size=(500, 1))
    error = ensemble.predict(states, actions) - (0.9 * states + 0.1 * actions)
    assert np.sqrt(np.mean(error ** 2)) < 1e-3


def test_training_on_identity_dynamics_reaches_zero_output():
    """A linear member gets there within 2000 Adam steps."""
    rng = np.random.default_rng(5)
    states = rng.standard_normal((400, 2))
    buffer = ReplayBuffer().insert(
        Transition(s, a, 0.0, s.copy(), False) for s, a in zip(states, rng.standard_normal((400, 1)))
    )
    ensemble = DynamicsEnsemble(2, 1, hidden=(), n_members=1, lr=1e-2)
    history = train_ensemble(ensemble, buffer, epochs=1, min_steps=2000, seed=0)
    assert history.steps == 2000
    assert history.train_loss < 1e-8
    np.testing.assert_allclose(ensemble.predict(states, np.zeros((400, 1))), states, atol=1e-9)


def test_rescaled_states_leave_the_loss_curve_unchanged(rng):
    buffer = linear_buffer(rng, 300)
    data = buffer.as_arrays()
    scaled = ReplayBuffer().insert(
        Transition(8.0 * s, a, 0.0, 8.0 * s2, False) for s, a, s2 in zip(data["s"], data["a"], data["s_next"])
    )
    first = DynamicsEnsemble(2, 1, hidden=(8,), n_members=2, seed=4)
    second = DynamicsEnsemble(2, 1, hidden=(8,), n_members=2, seed=4)
    plain = train_ensemble(first, buffer, epochs=20, seed=2)
    rescaled = train_ensemble(second, scaled, epochs=20, seed=2)
    np.testing.assert_allclose(rescaled.member_losses, plain.member_losses, rtol=1e-7)
    np.testing.assert_allclose(second.normalizer.state_scale, 8.0 * first.normalizer.state_scale)


def test_trained_model_keeps_the_goal_fixed():
    env = make_env("gridworld-goal", config=EnvConfig(grid_size=4, horizon=10))
    trajectories = collect_rollouts(env, UniformGridActions(), 400, seed=0)
    buffer = ReplayBuffer().insert(t for tr in trajectories for t in tr.transitions())
    ensemble = DynamicsEnsemble(env.state_dim, env.action_dim, hidden=(16,), n_members=2)
    train_ensemble(ensemble, buffer, epochs=5, min_steps=50)

    data = buffer.as_arrays()
    goal = slice(env.n_cells, None)
    for member in range(2):
        predicted = ensemble.predict(data["s"], data["a"], member)
        assert np.abs(predicted[:, goal] - data["s"][:, goal]).max() < 1e-5
        decoded = env.decode_model_state(predicted, np.random.default_rng(member))
        np.testing.assert_array_equal(env.goals(decoded), env.goals(data["s"]))


def test_training_is_seeded(rng):
    buffer = linear_buffer(rng, 200)
    states, actions = buffer.as_arrays()["s"], buffer.as_arrays()["a"]
    first = DynamicsEnsemble(2, 1, hidden=(8,), n_members=2, seed=3)
    second = DynamicsEnsemble(2, 1, hidden=(8,), n_members=2, seed=3)
    train_ensemble(first, buffer, epochs=2, seed=[3, 1], min_steps=10)
    train_ensemble(second, buffer, epochs=2, seed=[3, 1], min_steps=10)
    np.testing.assert_array_equal(first.predict_all(states, actions), second.predict_all(states, actions))
    assert not np.array_equal(first.predict(states, actions, 0), first.predict(states, actions, 1))


def test_model_loss_needs_data():
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,))
    ensemble.normalizer = Normalizer.identity(2, 1)
    with pytest.raises(ValueError):
        ensemble.model_loss(0, np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((0, 2)))


def test_empty_buffer_rejected():
    with pytest.raises(ValueError):
        train_ensemble(DynamicsEnsemble(2, 1, hidden=(8,)), ReplayBuffer(), epochs=1)


def test_beta_step_keeps_normalizer(rng):
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,), n_members=1)
    train_ensemble(ensemble, linear_buffer(rng, 100), epochs=1, min_steps=10)
    stats = ensemble.normalizer.to_dict()
    params = ensemble.members[0].flatten()

    shifted = ReplayBuffer().insert(
        Transition(s + 5.0, a, 0.0, s + 5.5, False) for s, a in zip(rng.standard_normal((50, 2)), rng.standard_normal((50, 1)))
    )
    history = beta_step(ensemble, shifted, steps=3, lr=1e-4)
    assert history.steps == 3
    assert ensemble.normalizer.to_dict() == stats
    assert not np.array_equal(ensemble.members[0].flatten(), params)
    assert ensemble.optimizers[0].lr == ensemble.lr


def test_ensemble_save_load(tmp_path, rng):
    ensemble = DynamicsEnsemble(2, 1, hidden=(8,), n_members=3)
    buffer = linear_buffer(rng, 60)
    train_ensemble(ensemble, buffer, epochs=1, min_steps=5)
    ensemble.save(tmp_path / "ensemble")
    loaded = DynamicsEnsemble.load(tmp_path / "ensemble")
    data = buffer.as_arrays()
    assert loaded.n_members == 3
    np.testing.assert_array_equal(loaded.predict_all(data["s"], data["a"]), ensemble.predict_all(data["s"], data["a"]))


def test_perfect_model_matches_world(rng):
    env = make_env("point-reacher", config=EnvConfig())
    model = PerfectModel(env)
    states = env.sample_initial_states(5, rng)
    actions = rng.uniform(-1, 1, size=(5, 2))
    np.testing.assert_array_equal(model.predict(states, actions), env.expected_next_state(states, actions))
    assert model.predict_all(states, actions).shape == (1, 5, 6)
    assert model.model_loss(0, states, actions, env.transition(states, actions, rng)) == 0.0
