"""A one-member model that answers with the world's own expected next state."""

import numpy as np

from ..envs import Env


class PerfectModel:
    """
    Exact stand-in for the model player.

    Predictions are E[s' | s, a] under the wrapped world; for the gridworld the
    caller's `decode_model_state` turns that into an exact next-cell sample.
    """

    n_members = 1

    def __init__(self, env: Env):
        self.env = env

    def predict(self, states: np.ndarray, actions: np.ndarray, member: int = 0) -> np.ndarray:
        return self.env.expected_next_state(np.atleast_2d(states), np.atleast_2d(actions))

    def predict_all(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.predict(states, actions)[None]

    def model_loss(self, member: int, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> float:
        """Squared error against the observed next states, in raw units."""
        return float(np.mean((self.predict(states, actions) - next_states) ** 2))
