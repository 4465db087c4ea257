"""
Exact tabular MDP machinery.

Value evaluation, value iteration, visitation distributions and distribution
distances. Everything here is a pure function of immutable inputs.
"""

from .core import (
    TabularMdp,
    TabularPolicy,
    VisitationDistribution,
    discounted_state_visitation,
    exact_policy_value,
    state_marginals,
    value_iteration,
    visitation,
)
from .divergence import gaussian_kl, kl_divergence, row_kl, row_tv, tv_distance

__all__ = [
    "TabularMdp",
    "TabularPolicy",
    "VisitationDistribution",
    "discounted_state_visitation",
    "exact_policy_value",
    "gaussian_kl",
    "kl_divergence",
    "row_kl",
    "row_tv",
    "state_marginals",
    "tv_distance",
    "value_iteration",
    "visitation",
]
