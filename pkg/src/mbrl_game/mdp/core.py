"""
Exact tabular MDP machinery.

Policy evaluation, value iteration and visitation distributions computed by
dense linear algebra. These are the ground-truth oracle for every theory check
in the verify package, so they favour exactness over scale.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy import linalg

from ..errors import NonConvergenceError

logger = logging.getLogger(__name__)

MAX_STATES = 200
PROB_TOL = 1e-12
VISITATION_TOL = 1e-9

VisitationKind = Literal["average", "discounted", "marginal"]


def check_distribution(name: str, p: np.ndarray, axis: int = -1, tol: float = PROB_TOL) -> None:
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if not np.allclose(p.sum(axis=axis), 1.0, atol=tol, rtol=0.0):
        raise ValueError(f"{name} must sum to 1 within {tol}")


@dataclass(frozen=True)
class TabularMdp:
    """
    Finite MDP with state-dependent rewards.

    Attributes:
        transitions: P[s, a, s'] transition probabilities
        rewards: R[s], bounded in [0, r_max]
        gamma: Discount factor in [0, 1)
        rho: Initial state distribution
        r_max: Declared reward bound; defaults to max(R)
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    rho: np.ndarray
    r_max: Optional[float] = None

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.rewards, dtype=np.float64)
        rho = np.asarray(self.rho, dtype=np.float64)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "rho", rho)

        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        n_states = P.shape[0]
        if n_states > MAX_STATES:
            raise ValueError(f"exact MDP machinery is capped at {MAX_STATES} states, got {n_states}")
        if R.shape != (n_states,) or rho.shape != (n_states,):
            raise ValueError("rewards and rho must be vectors over the state space")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        check_distribution("transitions", P)
        check_distribution("rho", rho)

        r_max = float(R.max()) if self.r_max is None else float(self.r_max)
        if np.any(R < 0) or np.any(R > r_max + PROB_TOL):
            raise ValueError(f"rewards must lie in [0, {r_max}]")
        object.__setattr__(self, "r_max", r_max)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def with_transitions(self, transitions: np.ndarray) -> "TabularMdp":
        """Same rewards, discount and start distribution under new dynamics."""
        return TabularMdp(transitions, self.rewards, self.gamma, self.rho, self.r_max)

    def policy_chain(self, policy: "TabularPolicy") -> np.ndarray:
        """State-to-state kernel P_pi[s, s'] induced by a policy."""
        policy.check_shape(self)
        return np.einsum("sa,sat->st", policy.probs, self.transitions)


@dataclass(frozen=True)
class TabularPolicy:
    """Stochastic tabular policy pi[s, a]."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise ValueError(f"policy probs must be a matrix, got shape {probs.shape}")
        check_distribution("policy", probs)

    @classmethod
    def deterministic(cls, actions: np.ndarray, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def check_shape(self, mdp: TabularMdp) -> None:
        if self.probs.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(
                f"policy shape {self.probs.shape} does not match MDP "
                f"({mdp.n_states}, {mdp.n_actions})"
            )


@dataclass(frozen=True)
class VisitationDistribution:
    """State or state-action occupancy of a policy."""

    kind: VisitationKind
    dist: np.ndarray
    horizon_or_t: Optional[int] = None
    over: Literal["state", "state_action"] = "state"

    def __post_init__(self):
        total = float(np.sum(self.dist))
        if abs(total - 1.0) > VISITATION_TOL:
            raise ValueError(f"visitation must sum to 1, got {total}")

    def states(self) -> np.ndarray:
        """Marginal over states."""
        return self.dist if self.over == "state" else self.dist.sum(axis=1)


def _solve(A: np.ndarray, b: np.ndarray, transpose: bool = False) -> np.ndarray:
    lu_piv = linalg.lu_factor(A)
    return linalg.lu_solve(lu_piv, b, trans=1 if transpose else 0)


def exact_policy_value(mdp: TabularMdp, policy: TabularPolicy) -> tuple[np.ndarray, float]:
    """
    Solve V = R + gamma * P_pi V exactly.

    Returns:
        (V, J) with J = rho . V
    """
    P_pi = mdp.policy_chain(policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi
    values = _solve(A, mdp.rewards)

    residual = np.max(np.abs(values - mdp.rewards - mdp.gamma * P_pi @ values))
    if residual > 1e-9:
        logger.warning(f"policy evaluation residual {residual:.3e} exceeds 1e-9")
    return values, float(mdp.rho @ values)


def _greedy(mdp: TabularMdp, values: np.ndarray) -> np.ndarray:
    q = mdp.rewards[:, None] + mdp.gamma * mdp.transitions @ values
    return np.argmax(q, axis=1)


def value_iteration(
    mdp: TabularMdp,
    tol: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> tuple[TabularPolicy, float]:
    """
    Optimal deterministic policy by value iteration.

    Iterates the Bellman optimality operator until the sup-norm residual is
    below tol, then polishes the greedy policy with exact policy-iteration
    sweeps so the returned policy is optimal up to floating point.

    Returns:
        (optimal_policy, J_star)
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    values = np.zeros(mdp.n_states)
    for iteration in range(max_iterations):
        q = mdp.rewards[:, None] + mdp.gamma * mdp.transitions @ values
        updated = q.max(axis=1)
        residual = np.max(np.abs(updated - values))
        values = updated
        if residual <= tol:
            logger.debug(f"value iteration converged after {iteration + 1} sweeps")
            break
    else:
        raise NonConvergenceError(f"value iteration did not converge within {max_iterations} sweeps")

    actions = _greedy(mdp, values)
    for _ in range(mdp.n_states * mdp.n_actions + 1):
        policy = TabularPolicy.deterministic(actions, mdp.n_actions)
        values, _ = exact_policy_value(mdp, policy)
        q = mdp.rewards[:, None] + mdp.gamma * mdp.transitions @ values
        current = q[np.arange(mdp.n_states), actions]
        improvable = q.max(axis=1) > current + 1e-12
        if not np.any(improvable):
            break
        actions = np.where(improvable, np.argmax(q, axis=1), actions)

    policy = TabularPolicy.deterministic(actions, mdp.n_actions)
    _, j_star = exact_policy_value(mdp, policy)
    return policy, j_star


def state_marginals(mdp: TabularMdp, policy: TabularPolicy, horizon: int) -> np.ndarray:
    """Forward marginals rho^T P_pi^t for t = 0..horizon, shape (horizon + 1, S)."""
    P_pi = mdp.policy_chain(policy)
    marginals = np.empty((horizon + 1, mdp.n_states))
    marginals[0] = mdp.rho
    for t in range(1, horizon + 1):
        marginals[t] = marginals[t - 1] @ P_pi
    return marginals


def discounted_state_visitation(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """(1 - gamma) rho^T (I - gamma P_pi)^-1."""
    P_pi = mdp.policy_chain(policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi
    return (1.0 - mdp.gamma) * _solve(A, mdp.rho, transpose=True)


def visitation(
    mdp: TabularMdp,
    policy: TabularPolicy,
    kind: VisitationKind = "discounted",
    horizon: Optional[int] = None,
    over: Literal["state", "state_action"] = "state",
) -> VisitationDistribution:
    """
    Visitation distribution of a policy.

    Args:
        kind: "average" (mean of marginals over t < horizon), "discounted", or
            "marginal" (marginal at t = horizon)
        horizon: T for the average kind, t for the marginal kind
        over: "state" or "state_action" (multiplies by pi[s, a])
    """
    policy.check_shape(mdp)
    if kind == "discounted":
        dist = discounted_state_visitation(mdp, policy)
    elif kind in ("average", "marginal"):
        if horizon is None or horizon < (1 if kind == "average" else 0):
            raise ValueError(f"{kind} visitation needs a valid horizon, got {horizon}")
        if kind == "average":
            dist = state_marginals(mdp, policy, horizon - 1).mean(axis=0)
        else:
            dist = state_marginals(mdp, policy, horizon)[horizon]
    else:
        raise ValueError(f"unknown visitation kind: {kind}")

    if over == "state_action":
        dist = dist[:, None] * policy.probs
    return VisitationDistribution(kind=kind, dist=dist, horizon_or_t=horizon, over=over)
