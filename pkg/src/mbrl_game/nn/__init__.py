"""
Differentiable function approximation for both players.

Fully connected networks with manual reverse/forward mode derivatives, Adam,
and diagonal-Gaussian log-density gradients. All math is float64.
"""

from .adam import AdamState, adam_step
from .checkpoint import load_flat, load_mlp, save_flat, save_mlp
from .gaussian import gaussian_kl_diag, gaussian_log_prob, gaussian_log_prob_grads
from .mlp import Mlp

__all__ = [
    "AdamState",
    "Mlp",
    "adam_step",
    "gaussian_kl_diag",
    "gaussian_log_prob",
    "gaussian_log_prob_grads",
    "load_flat",
    "load_mlp",
    "save_flat",
    "save_mlp",
]
