"""
Randomized certification sweeps.

Each suite draws random tabular instances, runs the matching checker and
collects one summary row per trial. The first violating instance is kept in
full so it can be dumped and replayed.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from ..mdp import TabularMdp, TabularPolicy
from .amplification import check_error_amplification
from .bounds import BoundReport, check_performance_difference, check_simulation_lemma, check_theorem1

logger = logging.getLogger(__name__)

SUITES = ("lemma1", "lemma2", "lemma3", "theorem1")
SWEEP_SCHEMA_VERSION = 1


def random_distribution(rng: np.random.Generator, shape: tuple[int, ...], concentration: float = 1.0) -> np.ndarray:
    """Dirichlet rows along the last axis."""
    return rng.dirichlet(np.full(shape[-1], concentration), size=shape[:-1])


def random_mdp(
    rng: np.random.Generator,
    max_states: int = 20,
    max_actions: int = 4,
    gamma: Optional[float] = None,
) -> TabularMdp:
    n_states = int(rng.integers(2, max_states + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    concentration = float(rng.choice([0.1, 1.0, 10.0]))
    return TabularMdp(
        transitions=random_distribution(rng, (n_states, n_actions, n_states), concentration),
        rewards=rng.uniform(0.0, 1.0, size=n_states),
        gamma=float(rng.uniform(0.5, 0.95)) if gamma is None else gamma,
        rho=random_distribution(rng, (n_states,)),
        r_max=1.0,
    )


def random_model(rng: np.random.Generator, world: TabularMdp) -> TabularMdp:
    """
    A full-support perturbation of the world's kernel.

    Rows are mixed with fresh Dirichlet rows; some trials only touch a random
    subset of (s, a) pairs so local model errors are exercised too.
    """
    noise = random_distribution(rng, world.transitions.shape)
    weight = rng.uniform(0.0, 0.5, size=world.transitions.shape[:2] + (1,))
    if rng.random() < 0.5:
        weight *= rng.random(world.transitions.shape[:2] + (1,)) < 0.3
    # full support keeps KL finite
    weight = np.maximum(weight, 1e-6)
    return world.with_transitions((1.0 - weight) * world.transitions + weight * noise)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    if rng.random() < 0.3:
        return TabularPolicy.deterministic(rng.integers(0, n_actions, size=n_states), n_actions)
    return TabularPolicy(random_distribution(rng, (n_states, n_actions)))


def mdp_to_dict(mdp: TabularMdp) -> dict[str, Any]:
    return {
        "transitions": mdp.transitions.tolist(),
        "rewards": mdp.rewards.tolist(),
        "gamma": mdp.gamma,
        "rho": mdp.rho.tolist(),
        "r_max": mdp.r_max,
    }


def mdp_from_dict(data: dict[str, Any]) -> TabularMdp:
    return TabularMdp(
        np.asarray(data["transitions"]), np.asarray(data["rewards"]), data["gamma"],
        np.asarray(data["rho"]), data["r_max"],
    )


def _trial_pair(rng: np.random.Generator, max_states: int, max_actions: int):
    world = random_mdp(rng, max_states, max_actions)
    model = random_model(rng, world)
    policy = random_policy(rng, world.n_states, world.n_actions)
    instance = {"world": mdp_to_dict(world), "model": mdp_to_dict(model), "policy": policy.probs.tolist()}
    return world, model, policy, instance


@dataclass
class SuiteResult:
    suite: str
    rows: list[dict[str, Any]] = field(default_factory=list)
    violation: Optional[dict[str, Any]] = None

    @property
    def holds(self) -> bool:
        return self.violation is None

    @property
    def median_tightness(self) -> float:
        return float(np.median([row["tightness"] for row in self.rows])) if self.rows else 0.0


def _row(suite: str, trial: int, report: BoundReport) -> dict[str, Any]:
    row = {"suite": suite, "trial": trial, "lhs": report.lhs, "bound": report.bound,
           "tightness": report.tightness, "holds": report.holds}
    row.update({f"term_{name}": value for name, value in report.terms.items()})
    return row


def run_suite(
    suite: str,
    trials: int,
    seed: int,
    bound_scale: float = 1.0,
    max_states: int = 20,
    max_actions: int = 4,
    amplification_horizon: int = 50,
) -> SuiteResult:
    """
    Run one certification suite.

    Args:
        suite: lemma1 | lemma2 | lemma3 | theorem1
        trials: Number of random instances
        seed: Master seed; trial i draws from (seed, suite index, i)
        bound_scale: Multiplier on every bound (1.0 outside of negative controls)
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite '{suite}', expected one of {SUITES}")
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")

    result = SuiteResult(suite)
    checks: dict[str, Callable[..., BoundReport]] = {
        "lemma1": check_simulation_lemma,
        "lemma3": check_performance_difference,
        "theorem1": check_theorem1,
    }
    for trial in range(trials):
        rng = np.random.default_rng([seed, SUITES.index(suite), trial])
        world, model, policy, instance = _trial_pair(rng, max_states, max_actions)
        if suite == "lemma2":
            P1, P2 = world.policy_chain(policy), model.policy_chain(policy)
            _, report = check_error_amplification(P1, P2, world.rho, amplification_horizon, bound_scale)
        else:
            report = checks[suite](world, model, policy, bound_scale=bound_scale)

        result.rows.append(_row(suite, trial, report))
        if not report.holds and result.violation is None:
            logger.error(f"{suite} violated on trial {trial}: lhs {report.lhs:.6g} > bound {report.bound:.6g}")
            result.violation = {
                "suite": suite, "trial": trial, "seed": seed, "bound_scale": bound_scale,
                "report": report.to_dict(), "instance": instance,
            }
    logger.info(f"{suite}: {trials} trials, median tightness {result.median_tightness:.3f}")
    return result


def write_sweep_csv(path: Path, results: list[SuiteResult], config_hash: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row for result in results for row in result.rows])
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version={SWEEP_SCHEMA_VERSION} config_hash={config_hash}\n")
        frame.to_csv(f, index=False)


def dump_violation(path: Path, violation: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(violation, f, indent=2, sort_keys=True)


def replay_violation(path: Path) -> BoundReport:
    """Re-run the checker on a dumped instance."""
    with open(path) as f:
        violation = json.load(f)
    instance = violation["instance"]
    world, model = mdp_from_dict(instance["world"]), mdp_from_dict(instance["model"])
    policy = TabularPolicy(np.asarray(instance["policy"]))
    scale = violation.get("bound_scale", 1.0)
    if violation["suite"] == "lemma2":
        _, report = check_error_amplification(
            world.policy_chain(policy), model.policy_chain(policy), world.rho,
            violation["report"]["details"]["horizon"], scale,
        )
        return report
    checks = {"lemma1": check_simulation_lemma, "lemma3": check_performance_difference, "theorem1": check_theorem1}
    return checks[violation["suite"]](world, model, policy, bound_scale=scale)
