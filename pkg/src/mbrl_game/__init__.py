"""
mbrl-game - model-based reinforcement learning as a game between a policy
player and a model player.

This package provides the PAL, MAL, GDA and BR solvers at desk scale, the
model-based NPG policy player, a dynamics ensemble model player, and an exact
tabular harness that certifies the model-error performance bounds.
"""

__version__ = "0.1.0"
__description__ = "Model-based RL as a policy-vs-model game with an exact theory harness"

from .config import GameConfig, resolve_config
from .game import GameRunner, TrainingLog
from .main import main

__all__ = ["GameConfig", "GameRunner", "TrainingLog", "main", "resolve_config"]
