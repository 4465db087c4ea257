import numpy as np
import pytest

from mbrl_game.config import resolve_config
from mbrl_game.mdp import TabularMdp

TINY_GAME = {
    "budget": 600,
    "n_init": 200,
    "samples_per_iter": 100,
    "init_model_epochs": 2,
    "eval_episodes": 2,
    "env": {"name": "gridworld-goal", "grid_size": 4, "horizon": 10},
    "npg": {"n_traj": 8, "policy_hidden": [8], "value_hidden": [8], "value_epochs": 1},
    "model": {"ensemble_size": 2, "hidden": [16], "min_steps": 5, "max_steps": 50},
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    """Build a fast desk config; keyword overrides win over the tiny file layer."""

    def build(solver: str = "pal", file_data: dict | None = None, **overrides):
        data = {**TINY_GAME, **(file_data or {})}
        return resolve_config(data, {"solver": solver, **overrides})

    return build


def chain_mdp(gamma: float = 0.9) -> TabularMdp:
    """s0 -> s1 -> s1 with reward on s1, starting in s0."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMdp(P, np.array([0.0, 1.0]), gamma, np.array([1.0, 0.0]))
