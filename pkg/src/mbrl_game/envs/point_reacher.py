"""2D point-mass reacher: a double integrator chasing a per-episode goal."""

from typing import Optional

import numpy as np

from ..config import EnvConfig
from .base import Env, SeedLike, Trajectory

ARENA = 1.0
START_HALF_WIDTH = 0.2
GOAL_X = {"default": (-0.8, -0.3), "shifted": (0.3, 0.8)}
GOAL_Y = (-0.8, 0.8)


class PointReacher(Env):
    """
    State (px, py, vx, vy, gx, gy); action is a force clipped to [-1, 1]^2.

    Explicit Euler: p' = p + dt * v, v' = v + dt * F / m. Positions are clipped
    to the arena and the velocity component hitting a wall is zeroed.
    """

    name = "point-reacher"
    state_dim = 6
    action_dim = 2

    def __init__(self, config: Optional[EnvConfig] = None, seed: SeedLike = 0):
        super().__init__(config or EnvConfig(name=self.name), seed)
        self.dt = self.config.dt
        self.mass = self.config.mass
        self.goal_region = self.config.goal_region
        self.success_distance = self.config.success_distance

    @property
    def reward_bounds(self) -> tuple[float, float]:
        return (-2.0 * np.sqrt(2.0) * ARENA, 0.0)

    @property
    def task_coordinates(self) -> np.ndarray:
        return np.array([0, 1])

    def clip_action(self, actions: np.ndarray) -> np.ndarray:
        return np.clip(actions, -1.0, 1.0)

    def sample_initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        states = np.zeros((n, self.state_dim))
        states[:, 0:2] = rng.uniform(-START_HALF_WIDTH, START_HALF_WIDTH, size=(n, 2))
        states[:, 4] = rng.uniform(*GOAL_X[self.goal_region], size=n)
        states[:, 5] = rng.uniform(*GOAL_Y, size=n)
        return states

    def expected_next_state(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        force = self.clip_action(np.atleast_2d(actions))
        pos, vel = states[:, 0:2], states[:, 2:4]

        new_pos = pos + self.dt * vel
        new_vel = vel + self.dt * force / self.mass
        hit_wall = np.abs(new_pos) > ARENA
        new_pos = np.clip(new_pos, -ARENA, ARENA)
        new_vel = np.where(hit_wall, 0.0, new_vel)

        next_states = states.copy()
        next_states[:, 0:2] = new_pos
        next_states[:, 2:4] = new_vel
        return next_states

    def transition(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.expected_next_state(states, actions)

    def distance_to_goal(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        return np.linalg.norm(states[:, 0:2] - states[:, 4:6], axis=1)

    def reward(self, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        return -self.distance_to_goal(states)

    def is_success(self, trajectory: Trajectory) -> bool:
        return bool(self.distance_to_goal(trajectory.final_state)[0] < self.success_distance)

    def _scale_dynamics(self, magnitude: float) -> None:
        self.mass *= magnitude

    def _shift_goals(self) -> None:
        self.goal_region = "default" if self.goal_region == "shifted" else "shifted"
