"""Dataset statistics for the delta-parameterized dynamics models."""

from dataclasses import dataclass
from typing import Any

import numpy as np

SCALE_FLOOR = 1e-6


def _scale(x: np.ndarray) -> np.ndarray:
    return np.maximum(x.std(axis=0), SCALE_FLOOR)


@dataclass
class Normalizer:
    """
    Per-coordinate means and scales.

    Attributes:
        state_mean, state_scale: input state statistics
        action_mean, action_scale: input action statistics
        delta_scale: scale of s' - s, the model's output unit
    """

    state_mean: np.ndarray
    state_scale: np.ndarray
    action_mean: np.ndarray
    action_scale: np.ndarray
    delta_scale: np.ndarray

    @classmethod
    def fit(cls, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> "Normalizer":
        if states.shape[0] == 0:
            raise ValueError("cannot fit a normalizer on an empty dataset")
        return cls(
            state_mean=states.mean(axis=0),
            state_scale=_scale(states),
            action_mean=actions.mean(axis=0),
            action_scale=_scale(actions),
            delta_scale=_scale(next_states - states),
        )

    @classmethod
    def identity(cls, state_dim: int, action_dim: int) -> "Normalizer":
        return cls(
            np.zeros(state_dim), np.ones(state_dim),
            np.zeros(action_dim), np.ones(action_dim),
            np.ones(state_dim),
        )

    def inputs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Normalized network input [(s - mu_s) / sigma_s, (a - mu_a) / sigma_a]."""
        return np.concatenate(
            [(states - self.state_mean) / self.state_scale, (actions - self.action_mean) / self.action_scale],
            axis=-1,
        )

    def delta_targets(self, states: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        return (next_states - states) / self.delta_scale

    def to_dict(self) -> dict[str, Any]:
        return {key: getattr(self, key).tolist() for key in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Normalizer":
        return cls(**{key: np.asarray(data[key], dtype=np.float64) for key in cls.__dataclass_fields__})
