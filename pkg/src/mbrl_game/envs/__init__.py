"""
Desk-scale worlds for the game: a tabular-exportable gridworld and two
continuous control tasks.
"""

from typing import Optional

from ..config import EnvConfig
from .base import ActionSampler, Env, EnvSpec, SeedLike, Trajectory, Transition, as_generator, seed_list
from .gridworld import GridWorld
from .pendulum import Pendulum
from .point_reacher import PointReacher
from .rollouts import collect_rollouts, evaluate_policy, read_trajectories, write_trajectories

ENV_REGISTRY: dict[str, type[Env]] = {
    GridWorld.name: GridWorld,
    PointReacher.name: PointReacher,
    Pendulum.name: Pendulum,
}


def make_env(name: str, seed: SeedLike = 0, config: Optional[EnvConfig] = None) -> Env:
    """
    Build a world by name.

    Args:
        name: One of the registered env names
        seed: Seed for the env's own stepper RNG
        config: Env settings; its name field is overridden by `name`

    Raises:
        ValueError: unknown name
    """
    if name not in ENV_REGISTRY:
        raise ValueError(f"unknown environment '{name}', expected one of {sorted(ENV_REGISTRY)}")
    config = (config or EnvConfig()).model_copy(update={"name": name})
    return ENV_REGISTRY[name](config, seed)


__all__ = [
    "ActionSampler",
    "ENV_REGISTRY",
    "Env",
    "EnvSpec",
    "GridWorld",
    "Pendulum",
    "PointReacher",
    "SeedLike",
    "Trajectory",
    "Transition",
    "as_generator",
    "seed_list",
    "collect_rollouts",
    "evaluate_policy",
    "make_env",
    "read_trajectories",
    "write_trajectories",
]
