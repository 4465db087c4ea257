"""
Exact certification of the model-error performance bounds.

Every checker compares a left-hand side computed by exact dynamic
programming against the closed-form bound and returns a BoundReport. Infinite
horizon sums over per-timestep marginals are truncated at T*, the first t with
gamma^t * R_max / (1 - gamma) < 1e-9; the neglected tail enters the bound as an
explicit `truncation_slack` term.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Optional

import numpy as np

from ..errors import SupportViolationError
from ..mdp import (
    TabularMdp,
    TabularPolicy,
    exact_policy_value,
    row_kl,
    row_tv,
    state_marginals,
    tv_distance,
    value_iteration,
    visitation,
)

logger = logging.getLogger(__name__)

HOLDS_TOL = 1e-9
TAIL_TOL = 1e-9


@dataclass
class BoundReport:
    """
    Outcome of one bound check.

    `holds` is lhs <= bound + 1e-9; `tightness` is lhs / bound (0 when both
    vanish). `flags` lists anything that qualifies the result.
    """

    name: str
    lhs: float
    terms: dict[str, float]
    bound: float
    holds: bool
    tightness: float
    flags: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def make_report(
    name: str,
    lhs: float,
    terms: dict[str, float],
    bound_scale: float = 1.0,
    flags: Optional[list[str]] = None,
    details: Optional[dict[str, Any]] = None,
) -> BoundReport:
    bound = bound_scale * float(sum(terms.values()))
    if bound > 0:
        tightness = lhs / bound
    else:
        tightness = 0.0 if lhs <= HOLDS_TOL else math.inf
    return BoundReport(
        name=name, lhs=float(lhs), terms={k: float(v) for k, v in terms.items()}, bound=bound,
        holds=bool(lhs <= bound + HOLDS_TOL), tightness=float(tightness),
        flags=flags or [], details=details or {},
    )


def truncation_horizon(gamma: float, r_max: float, tol: float = TAIL_TOL) -> int:
    """Smallest t with gamma^t * r_max / (1 - gamma) < tol."""
    if r_max <= 0 or gamma == 0:
        return 0
    scale = r_max / (1.0 - gamma)
    t = max(0, math.ceil(math.log(tol / scale) / math.log(gamma)))
    while gamma ** t * scale >= tol:
        t += 1
    while t > 0 and gamma ** (t - 1) * scale < tol:
        t -= 1
    return t


def truncation_slack(gamma: float, r_max: float, horizon: int) -> float:
    """Worst-case contribution of the per-step model error beyond the truncation horizon."""
    return 2.0 * r_max * gamma ** (horizon + 1) / (1.0 - gamma) ** 2


def _check_pair(W: TabularMdp, M: TabularMdp) -> None:
    if W.transitions.shape != M.transitions.shape:
        raise ValueError(f"world and model shapes differ: {W.transitions.shape} vs {M.transitions.shape}")
    if W.gamma != M.gamma or not np.array_equal(W.rewards, M.rewards) or not np.array_equal(W.rho, M.rho):
        raise ValueError("world and model must share rewards, discount and start distribution")


def _state_action_marginals(W: TabularMdp, policy: TabularPolicy, horizon: int) -> np.ndarray:
    """mu_W^{pi,t}(s, a) for t = 0..horizon, shape (horizon + 1, S, A)."""
    return state_marginals(W, policy, horizon)[:, :, None] * policy.probs[None]


def _value_gap(W: TabularMdp, M: TabularMdp, policy: TabularPolicy) -> tuple[float, float, float]:
    _, j_w = exact_policy_value(W, policy)
    _, j_m = exact_policy_value(M, policy)
    return abs(j_w - j_m), j_w, j_m


def check_simulation_lemma(
    W: TabularMdp,
    M: TabularMdp,
    policy: TabularPolicy,
    bound_scale: float = 1.0,
) -> BoundReport:
    """
    |J(pi, W) - J(pi, M)| <= 2 gamma eps R_max / (1 - gamma)^2 with eps the
    worst per-(s, a) TV distance between the two kernels.
    """
    _check_pair(W, M)
    eps = float(row_tv(W.transitions, M.transitions).max())
    lhs, j_w, j_m = _value_gap(W, M, policy)
    model_term = 2.0 * W.gamma * eps * W.r_max / (1.0 - W.gamma) ** 2
    return make_report(
        "simulation_lemma", lhs, {"model_error": model_term}, bound_scale,
        details={"eps_tv": eps, "J_world": j_w, "J_model": j_m},
    )


def check_performance_difference(
    W: TabularMdp,
    M: TabularMdp,
    policy: TabularPolicy,
    bound_scale: float = 1.0,
) -> BoundReport:
    """
    Same inequality with eps the worst per-timestep expected TV under the
    policy's own state-action marginals in W, for t <= T*.
    """
    _check_pair(W, M)
    horizon = truncation_horizon(W.gamma, W.r_max)
    mu = _state_action_marginals(W, policy, horizon)
    tv_rows = row_tv(W.transitions, M.transitions)
    per_t = np.einsum("tsa,sa->t", mu, tv_rows)
    eps = float(per_t.max())

    lhs, j_w, j_m = _value_gap(W, M, policy)
    terms = {
        "model_error": 2.0 * W.gamma * eps * W.r_max / (1.0 - W.gamma) ** 2,
        "truncation_slack": truncation_slack(W.gamma, W.r_max, horizon),
    }
    return make_report(
        "performance_difference", lhs, terms, bound_scale,
        details={"eps_tv": eps, "argmax_t": int(per_t.argmax()), "truncation_horizon": horizon,
                 "J_world": j_w, "J_model": j_m},
    )


def model_kl_error(W: TabularMdp, M: TabularMdp, policy: TabularPolicy, horizon: int) -> tuple[float, float]:
    """
    Worst per-timestep model loss under the policy's marginals in W.

    Returns:
        (eps_kl, eps_tv) over t <= horizon

    Raises:
        SupportViolationError: if M misses a transition that W can reach
    """
    mu = _state_action_marginals(W, policy, horizon)
    reachable = mu.max(axis=0) > 0
    kl_rows = row_kl(W.transitions, M.transitions, mask=reachable)
    tv_rows = row_tv(W.transitions, M.transitions)
    eps_kl = float(np.einsum("tsa,sa->t", mu, kl_rows).max())
    eps_tv = float(np.einsum("tsa,sa->t", mu, tv_rows).max())
    return eps_kl, eps_tv


def check_theorem1(
    W: TabularMdp,
    M: TabularMdp,
    policy: TabularPolicy,
    visitation_kind: Literal["discounted", "average"] = "discounted",
    horizon: Optional[int] = None,
    bound_scale: float = 1.0,
) -> BoundReport:
    """
    Global suboptimality of a (policy, model) pair in the world.

    J* - J(pi, W) <= model_error + policy_suboptimality + domain_adaptation
    with
        model_error          2 gamma sqrt(eps_M) R_max / (1 - gamma)^2
        policy_suboptimality J(pi*_M, M) - J(pi, M)
        domain_adaptation    2 R_max / (1 - gamma) * TV(mu_W^{pi*}, mu_M^{pi*})

    eps_M is the KL model loss under the policy's own marginals in W. The
    domain term uses discounted state-action visitations; visitation_kind
    "average" swaps in T-step average visitations, for which the inequality is
    reported but not guaranteed.
    """
    _check_pair(W, M)
    r_max, gamma = W.r_max, W.gamma
    t_star = truncation_horizon(gamma, r_max)
    flags: list[str] = []

    pi_star, j_star = value_iteration(W)
    _, j_pi = exact_policy_value(W, policy)
    lhs = max(j_star - j_pi, 0.0)

    _, j_star_model = value_iteration(M)
    _, j_pi_model = exact_policy_value(M, policy)
    eps_pi = max(j_star_model - j_pi_model, 0.0)

    if visitation_kind == "average":
        if horizon is None:
            raise ValueError("average visitation needs an explicit horizon")
        flags.append("average_visitation_variant")
    mu_w = visitation(W, pi_star, visitation_kind, horizon, over="state_action")
    mu_m = visitation(M, pi_star, visitation_kind, horizon, over="state_action")
    domain_tv = tv_distance(mu_w.dist, mu_m.dist)

    details: dict[str, Any] = {"J_star": j_star, "J_pi": j_pi, "truncation_horizon": t_star, "domain_tv": domain_tv}
    try:
        eps_kl, eps_tv = model_kl_error(W, M, policy, t_star)
    except SupportViolationError as e:
        logger.warning(f"theorem check: {e}; model-error term is unbounded")
        flags.append("support_violation")
        details.update(eps_kl=math.inf)
        return BoundReport(
            name="global_performance", lhs=float(lhs),
            terms={"model_error": math.inf, "policy_suboptimality": eps_pi,
                   "domain_adaptation": 2.0 * r_max / (1.0 - gamma) * domain_tv},
            bound=math.inf, holds=True, tightness=0.0, flags=flags, details=details,
        )

    details.update(eps_kl=eps_kl, eps_tv=eps_tv, pinsker_tv_bound=math.sqrt(eps_kl / 2.0))
    terms = {
        "model_error": 2.0 * gamma * math.sqrt(eps_kl) * r_max / (1.0 - gamma) ** 2,
        "policy_suboptimality": eps_pi,
        "domain_adaptation": 2.0 * r_max / (1.0 - gamma) * domain_tv,
        "truncation_slack": truncation_slack(gamma, r_max, t_star),
    }
    return make_report("global_performance", lhs, terms, bound_scale, flags, details)
