"""Gridworld players in tabular form, for exact certification of a trained pair."""

from typing import Optional

import numpy as np

from ..dynamics import DynamicsModel
from ..envs import GridWorld
from ..mdp import TabularMdp, TabularPolicy
from ..policy import CategoricalPolicy
from .bounds import BoundReport, check_theorem1


def export_policy(env: GridWorld, policy: CategoricalPolicy, goal: tuple[int, int]) -> TabularPolicy:
    """pi[cell, action] for a fixed goal."""
    return TabularPolicy(policy.action_probs(env.tabular_states(goal)))


def export_model(
    env: GridWorld,
    model: DynamicsModel,
    goal: tuple[int, int],
    gamma: float,
    smoothing: float = 1e-3,
    member: Optional[int] = None,
) -> TabularMdp:
    """
    The model's next-cell kernel as a TabularMdp sharing the world's rewards.

    Each member's prediction goes through `GridWorld.next_cell_probs`, the
    rule rollouts decode with; members are pooled with equal weight unless
    `member` picks one. The kernel is mixed with the uniform distribution (weight `smoothing`)
    so KL against the world stays finite.
    """
    world = env.to_tabular(goal, gamma)
    n_cells, n_actions = env.n_cells, env.action_dim
    states = np.repeat(env.tabular_states(goal), n_actions, axis=0)
    actions = np.tile(np.eye(n_actions), (n_cells, 1))

    members = range(model.n_members) if member is None else [member]
    kernel = np.zeros((n_cells * n_actions, n_cells))
    for k in members:
        kernel += env.next_cell_probs(model.predict(states, actions, k))
    kernel /= len(members)
    kernel = (1.0 - smoothing) * kernel + smoothing / n_cells
    return world.with_transitions(kernel.reshape(n_cells, n_actions, n_cells))


def certify_gridworld_pair(
    env: GridWorld,
    policy: CategoricalPolicy,
    model: DynamicsModel,
    goal: tuple[int, int],
    gamma: float,
    smoothing: float = 1e-3,
) -> BoundReport:
    """Export the world, policy and model for one goal and check the global bound."""
    world = env.to_tabular(goal, gamma)
    learned = export_model(env, model, goal, gamma, smoothing)
    report = check_theorem1(world, learned, export_policy(env, policy, goal))
    report.details["goal"] = list(goal)
    return report
