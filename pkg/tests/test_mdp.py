import itertools

import numpy as np
import pytest

from mbrl_game.errors import SupportViolationError
from mbrl_game.mdp import (
    TabularMdp,
    TabularPolicy,
    discounted_state_visitation,
    exact_policy_value,
    gaussian_kl,
    kl_divergence,
    tv_distance,
    value_iteration,
    visitation,
)
from mbrl_game.verify import random_mdp

from .conftest import chain_mdp


def single_state(reward: float, gamma: float, n_actions: int = 1) -> TabularMdp:
    return TabularMdp(np.ones((1, n_actions, 1)), np.array([reward]), gamma, np.array([1.0]))


def test_single_state_zero_reward():
    values, J = exact_policy_value(single_state(0.0, 0.9), TabularPolicy.uniform(1, 1))
    assert values.tolist() == [0.0]
    assert J == 0.0


def test_single_state_geometric_series():
    values, J = exact_policy_value(single_state(0.5, 0.8), TabularPolicy.uniform(1, 1))
    assert values[0] == pytest.approx(0.5 / 0.2, abs=1e-12)
    assert J == pytest.approx(2.5, abs=1e-12)


def test_two_state_chain_value():
    _, J = exact_policy_value(chain_mdp(0.9), TabularPolicy.uniform(2, 1))
    assert J == pytest.approx(9.0, abs=1e-9)


def test_invalid_rows_rejected():
    P = np.full((2, 1, 2), 0.6)
    with pytest.raises(ValueError):
        TabularMdp(P, np.zeros(2), 0.9, np.array([1.0, 0.0]))


def test_gamma_one_rejected():
    with pytest.raises(ValueError):
        single_state(1.0, 1.0)


def test_value_iteration_single_state():
    _, j_star = value_iteration(single_state(1.0, 0.5, n_actions=3))
    assert j_star == pytest.approx(2.0, abs=1e-9)


def test_value_iteration_picks_rewarding_action():
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0  # a0 stays put
    P[0, 1, 1] = 1.0  # a1 reaches the reward state
    P[1, :, 1] = 1.0
    mdp = TabularMdp(P, np.array([0.0, 1.0]), 0.9, np.array([1.0, 0.0]))
    policy, _ = value_iteration(mdp)
    assert policy.probs[0].tolist() == [0.0, 1.0]


def test_value_iteration_matches_policy_enumeration(rng):
    for _ in range(10):
        mdp = random_mdp(rng, max_states=5, max_actions=3)
        best = max(
            exact_policy_value(mdp, TabularPolicy.deterministic(np.array(actions), mdp.n_actions))[1]
            for actions in itertools.product(range(mdp.n_actions), repeat=mdp.n_states)
        )
        _, j_star = value_iteration(mdp)
        assert j_star == pytest.approx(best, abs=1e-6)


def test_marginal_at_zero_is_rho(rng):
    mdp = random_mdp(rng, max_states=6)
    policy = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    dist = visitation(mdp, policy, "marginal", horizon=0)
    np.testing.assert_allclose(dist.dist, mdp.rho)


def test_absorbing_state_visitation():
    mdp = single_state(1.0, 0.9)
    policy = TabularPolicy.uniform(1, 1)
    for kind in ("average", "discounted", "marginal"):
        assert visitation(mdp, policy, kind, horizon=3).dist.tolist() == pytest.approx([1.0])


def test_discounted_visitation_matches_truncated_series():
    P = np.array([[[0.5, 0.5]], [[0.5, 0.5]]])
    mdp = TabularMdp(P, np.array([0.0, 1.0]), 0.5, np.array([1.0, 0.0]))
    policy = TabularPolicy.uniform(2, 1)
    P_pi = mdp.policy_chain(policy)

    series, marginal, t = np.zeros(2), mdp.rho.copy(), 0
    while mdp.gamma ** t >= 1e-12:
        series += (1 - mdp.gamma) * mdp.gamma ** t * marginal
        marginal = marginal @ P_pi
        t += 1
    np.testing.assert_allclose(discounted_state_visitation(mdp, policy), series, atol=1e-9)


def test_discounted_visitation_fixed_point(rng):
    for _ in range(20):
        mdp = random_mdp(rng, max_states=10)
        policy = TabularPolicy(rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states))
        mu = discounted_state_visitation(mdp, policy)
        fixed = (1 - mdp.gamma) * mdp.rho + mdp.gamma * mdp.policy_chain(policy).T @ mu
        np.testing.assert_allclose(mu, fixed, atol=1e-9)


def test_average_visitation_needs_horizon(rng):
    mdp = random_mdp(rng)
    with pytest.raises(ValueError):
        visitation(mdp, TabularPolicy.uniform(mdp.n_states, mdp.n_actions), "average")


def test_tv_examples():
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([0.8, 0.2], [0.6, 0.4]) == pytest.approx(0.2)


def test_tv_dimension_mismatch():
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.5], [1.0, 0.0, 0.0])


def test_kl_support_violation():
    with pytest.raises(SupportViolationError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_gaussian_kl_examples():
    assert gaussian_kl([0.0, 1.0], [0.0, 1.0], 1.0) == 0.0
    assert gaussian_kl([0.0, 0.0], [1.0, 0.0], 1.0) == pytest.approx(0.5)


def test_pinsker_and_metric_properties(rng):
    for _ in range(1000):
        p, q, r = rng.dirichlet(np.ones(5), size=3)
        assert tv_distance(p, q) <= np.sqrt(kl_divergence(p, q) / 2) + 1e-12
        assert tv_distance(p, q) == tv_distance(q, p)
        assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
