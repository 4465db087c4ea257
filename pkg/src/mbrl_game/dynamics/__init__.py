"""The model player: learned dynamics ensembles and their training data."""

from typing import Protocol

import numpy as np

from .buffer import ReplayBuffer, buffer_insert
from .ensemble import DynamicsEnsemble, TrainingHistory, beta_step, split_holdout, train_ensemble
from .normalizer import SCALE_FLOOR, Normalizer
from .perfect import PerfectModel


class DynamicsModel(Protocol):
    """Anything the policy player can roll out in."""

    n_members: int

    def predict(self, states: np.ndarray, actions: np.ndarray, member: int = 0) -> np.ndarray: ...


__all__ = [
    "DynamicsEnsemble",
    "DynamicsModel",
    "Normalizer",
    "PerfectModel",
    "ReplayBuffer",
    "SCALE_FLOOR",
    "TrainingHistory",
    "beta_step",
    "buffer_insert",
    "split_holdout",
    "train_ensemble",
]
