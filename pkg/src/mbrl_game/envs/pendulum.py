"""Torque-limited pendulum swing-up with the classic quadratic cost."""

from typing import Optional

import numpy as np

from ..config import EnvConfig
from .base import Env, SeedLike, Trajectory

GRAVITY = 10.0
LENGTH = 1.0
MAX_TORQUE = 2.0
MAX_SPEED = 8.0


def angle_normalize(theta: np.ndarray) -> np.ndarray:
    return ((theta + np.pi) % (2.0 * np.pi)) - np.pi


class Pendulum(Env):
    """State (cos theta, sin theta, theta_dot); theta = 0 is upright."""

    name = "pendulum"
    state_dim = 3
    action_dim = 1

    def __init__(self, config: Optional[EnvConfig] = None, seed: SeedLike = 0):
        super().__init__(config or EnvConfig(name=self.name), seed)
        self.dt = self.config.dt
        self.mass = self.config.mass
        self.success_angle = self.config.success_angle

    @property
    def reward_bounds(self) -> tuple[float, float]:
        worst = np.pi ** 2 + 0.1 * MAX_SPEED ** 2 + 0.001 * MAX_TORQUE ** 2
        return (-float(worst), 0.0)

    @property
    def task_coordinates(self) -> np.ndarray:
        return np.array([0, 1])

    def clip_action(self, actions: np.ndarray) -> np.ndarray:
        return np.clip(actions, -MAX_TORQUE, MAX_TORQUE)

    @staticmethod
    def angles(states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        return np.arctan2(states[:, 1], states[:, 0])

    def sample_initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        theta = rng.uniform(-np.pi, np.pi, size=n)
        theta_dot = rng.uniform(-1.0, 1.0, size=n)
        return np.stack([np.cos(theta), np.sin(theta), theta_dot], axis=1)

    def expected_next_state(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        u = self.clip_action(np.atleast_2d(actions))[:, 0]
        theta, theta_dot = self.angles(states), states[:, 2]

        accel = 3.0 * GRAVITY / (2.0 * LENGTH) * np.sin(theta) + 3.0 / (self.mass * LENGTH ** 2) * u
        new_theta_dot = np.clip(theta_dot + accel * self.dt, -MAX_SPEED, MAX_SPEED)
        new_theta = theta + new_theta_dot * self.dt
        return np.stack([np.cos(new_theta), np.sin(new_theta), new_theta_dot], axis=1)

    def transition(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.expected_next_state(states, actions)

    def reward(self, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        u = self.clip_action(np.atleast_2d(actions))[:, 0]
        theta = angle_normalize(self.angles(states))
        return -(theta ** 2 + 0.1 * states[:, 2] ** 2 + 0.001 * u ** 2)

    def is_success(self, trajectory: Trajectory) -> bool:
        return bool(abs(self.angles(trajectory.final_state)[0]) < self.success_angle)

    def _scale_dynamics(self, magnitude: float) -> None:
        self.mass *= magnitude
