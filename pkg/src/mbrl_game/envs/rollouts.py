"""
Real-world interaction and trajectory persistence.

Trajectory records are JSON lines, one transition per line:
{"episode", "t", "s", "a", "r", "s_next", "done"}.
"""

import json
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import SimulationError
from .base import ActionSampler, Env, SeedLike, Trajectory, as_generator

logger = logging.getLogger(__name__)


def _run_episode(
    env: Env,
    policy: ActionSampler,
    rng: np.random.Generator,
    max_steps: int,
) -> Trajectory:
    states, actions, rewards, next_states, dones = [], [], [], [], []
    s = env.reset()
    for _ in range(min(max_steps, env.horizon)):
        a = policy.sample(s[None, :], rng)[0]
        s_next, r, done, info = env.step(a)
        states.append(s)
        actions.append(a)
        rewards.append(r)
        next_states.append(s_next)
        dones.append(info["terminated"])
        s = s_next
        if done:
            break
    return Trajectory(
        states=np.array(states),
        actions=np.array(actions),
        rewards=np.array(rewards),
        next_states=np.array(next_states),
        dones=np.array(dones, dtype=bool),
    )


def collect_rollouts(
    env: Env,
    policy: ActionSampler,
    n_samples: int,
    seed: SeedLike = None,
) -> list[Trajectory]:
    """
    Interact with the world until exactly n_samples transitions are gathered.

    Episodes end at the env horizon or on termination; the last episode is cut
    short when the sample count is reached. Actions come straight from the
    stochastic policy. The same seed reproduces the same trajectories.

    Raises:
        SimulationError: if the world produces a non-finite state
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be at least 1, got {n_samples}")
    rng = as_generator(seed)
    env.seed(rng)

    trajectories: list[Trajectory] = []
    remaining = n_samples
    while remaining > 0:
        trajectory = _run_episode(env, policy, rng, remaining)
        trajectories.append(trajectory)
        remaining -= len(trajectory)
    logger.debug(f"collected {n_samples} samples in {len(trajectories)} episodes from {env.name}")
    return trajectories


def evaluate_policy(
    env: Env,
    policy: ActionSampler,
    n_episodes: int,
    gamma: float,
    seed: SeedLike = None,
) -> dict[str, float]:
    """
    Full-length evaluation episodes. These never count toward a sample budget.

    Returns:
        mean discounted return, its standard error, success rate and mean
        undiscounted return
    """
    rng = as_generator(seed)
    env.seed(rng)
    episodes = [_run_episode(env, policy, rng, env.horizon) for _ in range(n_episodes)]
    returns = np.array([ep.discounted_return(gamma) for ep in episodes])
    stderr = float(returns.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return {
        "return": float(returns.mean()),
        "return_se": stderr,
        "success_rate": float(np.mean([env.is_success(ep) for ep in episodes])),
        "undiscounted_return": float(np.mean([ep.rewards.sum() for ep in episodes])),
    }


def write_trajectories(path: Path, trajectories: Iterable[Trajectory]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for episode, trajectory in enumerate(trajectories):
            for t, tr in enumerate(trajectory.transitions()):
                record = {
                    "episode": episode,
                    "t": t,
                    "s": tr.s.tolist(),
                    "a": tr.a.tolist(),
                    "r": tr.r,
                    "s_next": tr.s_next.tolist(),
                    "done": tr.done,
                }
                f.write(json.dumps(record) + "\n")


def read_trajectories(path: Path) -> list[Trajectory]:
    """Inverse of write_trajectories."""
    episodes: dict[int, list[dict]] = {}
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SimulationError(f"{path}:{line_no}: malformed trajectory record") from e
            episodes.setdefault(record["episode"], []).append(record)

    trajectories = []
    for episode in sorted(episodes):
        records = sorted(episodes[episode], key=lambda rec: rec["t"])
        trajectories.append(Trajectory(
            states=np.array([rec["s"] for rec in records], dtype=np.float64),
            actions=np.array([rec["a"] for rec in records], dtype=np.float64),
            rewards=np.array([rec["r"] for rec in records], dtype=np.float64),
            next_states=np.array([rec["s_next"] for rec in records], dtype=np.float64),
            dones=np.array([rec["done"] for rec in records], dtype=bool),
        ))
    return trajectories
