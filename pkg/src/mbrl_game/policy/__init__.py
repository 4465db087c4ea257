"""The policy player: stochastic policies, value baseline and model-based NPG."""

from .npg import (
    FitResult,
    NpgStats,
    NpgStepInfo,
    SyntheticBatch,
    conjugate_gradient,
    explained_variance,
    fisher_vector_product,
    fit_value,
    gae_advantages,
    initial_states,
    npg_iteration,
    npg_step,
    npg_update,
    policy_gradient,
    rollout_horizon,
    standardize,
    synthetic_rollouts,
)
from .policies import (
    CategoricalPolicy,
    GaussianPolicy,
    Policy,
    ValueNet,
    load_policy,
    make_policy,
    save_policy,
)

__all__ = [
    "CategoricalPolicy",
    "FitResult",
    "GaussianPolicy",
    "NpgStats",
    "NpgStepInfo",
    "Policy",
    "SyntheticBatch",
    "ValueNet",
    "conjugate_gradient",
    "explained_variance",
    "fisher_vector_product",
    "fit_value",
    "gae_advantages",
    "initial_states",
    "load_policy",
    "make_policy",
    "npg_iteration",
    "npg_step",
    "npg_update",
    "policy_gradient",
    "rollout_horizon",
    "save_policy",
    "standardize",
    "synthetic_rollouts",
]
