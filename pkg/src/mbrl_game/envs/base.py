"""
Common world interface.

A world is a batch-capable stepper: every dynamics, reward and termination
function accepts (N, dim) arrays so the same code serves real interaction,
perfect-model rollouts and tabular export. The stateful `reset`/`step` pair is
a thin wrapper for single-episode interaction.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Protocol, Sequence, Union

import numpy as np

from ..config import EnvConfig, PerturbationSchedule
from ..errors import SimulationError

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], np.random.Generator, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def seed_list(seed: Union[int, Sequence[int]]) -> list[int]:
    """Seed as a flat list of ints, so sub-streams can append their own key."""
    return [int(s) for s in np.atleast_1d(seed)]


class ActionSampler(Protocol):
    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a world."""

    name: str
    state_dim: int
    action_dim: int
    horizon: int
    reward_bounds: tuple[float, float]
    discrete_actions: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")

    @property
    def r_max(self) -> float:
        return float(max(abs(self.reward_bounds[0]), abs(self.reward_bounds[1])))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Trajectory:
    """One episode (or episode prefix) stored as stacked arrays."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    diverged: bool = False
    info: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def final_state(self) -> np.ndarray:
        return self.next_states[-1]

    def discounted_return(self, gamma: float) -> float:
        return float(np.sum(self.rewards * gamma ** np.arange(len(self))))

    def transitions(self) -> Iterator[Transition]:
        for t in range(len(self)):
            yield Transition(
                self.states[t], self.actions[t], float(self.rewards[t]),
                self.next_states[t], bool(self.dones[t]),
            )


class Env:
    """
    Base class for the desk-scale worlds.

    Subclasses implement the batch functions; the base class provides the
    stateful stepper, seeding and perturbation plumbing.
    """

    name = "env"

    def __init__(self, config: Optional[EnvConfig] = None, seed: SeedLike = 0):
        self.config = config or EnvConfig(name=self.name)
        self.horizon = self.config.resolved_horizon
        self._rng = as_generator(seed)
        self._state: Optional[np.ndarray] = None
        self._t = 0

    # -- static description ------------------------------------------------

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(
            name=self.name,
            state_dim=self.state_dim,
            action_dim=self.action_dim,
            horizon=self.horizon,
            reward_bounds=self.reward_bounds,
            discrete_actions=self.discrete_actions,
        )

    state_dim: int
    action_dim: int
    discrete_actions = False
    default_shift_magnitude = 1.5

    @property
    def reward_bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def task_coordinates(self) -> np.ndarray:
        """State indices used when measuring model error."""
        return np.arange(self.state_dim)

    # -- batch functions ---------------------------------------------------

    def sample_initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_initial_state(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return self.sample_initial_states(1, rng or self._rng)[0]

    def transition(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sample next states from the true dynamics."""
        raise NotImplementedError

    def expected_next_state(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """E[s' | s, a] under the true dynamics."""
        raise NotImplementedError

    def reward(self, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def terminal(self, states: np.ndarray) -> np.ndarray:
        return np.zeros(np.atleast_2d(states).shape[0], dtype=bool)

    def is_success(self, trajectory: Trajectory) -> bool:
        raise NotImplementedError

    def decode_model_state(self, predicted: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Map a raw model prediction back onto the state space."""
        return predicted

    def clip_action(self, actions: np.ndarray) -> np.ndarray:
        return actions

    # -- stateful stepper --------------------------------------------------

    def seed(self, seed: SeedLike) -> None:
        self._rng = as_generator(seed)

    def reset(self) -> np.ndarray:
        self._state = self.sample_initial_state(self._rng)
        self._t = 0
        return self._state.copy()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict[str, Any]]:
        """
        Advance the current episode by one step.

        Returns:
            (next_state, reward, done, info); done marks termination or the horizon
        """
        if self._state is None:
            raise SimulationError("step() called before reset()")
        s = self._state[None, :]
        a = np.atleast_2d(np.asarray(action, dtype=np.float64))
        s_next = self.transition(s, a, self._rng)
        if not np.all(np.isfinite(s_next)):
            raise SimulationError(f"{self.name} produced a non-finite state at t={self._t}")
        r = float(self.reward(s, a, s_next)[0])
        self._t += 1
        terminated = bool(self.terminal(s_next)[0])
        truncated = self._t >= self.horizon
        self._state = s_next[0]
        return self._state.copy(), r, terminated or truncated, {"terminated": terminated, "t": self._t}

    # -- perturbations -----------------------------------------------------

    def _scale_dynamics(self, magnitude: float) -> None:
        raise ValueError(f"{self.name} does not support dynamics-shift")

    def _shift_goals(self) -> None:
        raise ValueError(f"{self.name} does not support goal-distribution-shift")

    def apply_perturbation(self, schedule: PerturbationSchedule) -> "Env":
        """Return a perturbed copy; the original world is left untouched."""
        perturbed = copy.deepcopy(self)
        magnitude = self.default_shift_magnitude if schedule.magnitude is None else schedule.magnitude
        if schedule.kind == "dynamics-shift":
            perturbed._scale_dynamics(magnitude)
        elif schedule.kind == "goal-distribution-shift":
            perturbed._shift_goals()
        else:
            raise ValueError(f"unknown perturbation kind: {schedule.kind}")
        logger.info(f"applied {schedule.kind} (magnitude {magnitude}) to {self.name}")
        return perturbed
