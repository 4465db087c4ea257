"""Replay buffer of real-world transitions with oldest-first eviction."""

from collections import deque
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..envs import Trajectory, Transition, read_trajectories, write_trajectories


class ReplayBuffer:
    """
    Insertion-ordered transition store.

    Args:
        capacity: Maximum number of transitions; None keeps everything
    """

    def __init__(self, capacity: Optional[int] = None):
        if capacity is not None and capacity < 1:
            raise ValueError(f"buffer capacity must be positive or None, got {capacity}")
        self.capacity = capacity
        self._data: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def insert(self, transitions: Iterable[Transition]) -> "ReplayBuffer":
        self._data.extend(transitions)
        return self

    def insert_trajectories(self, trajectories: Iterable[Trajectory]) -> "ReplayBuffer":
        for trajectory in trajectories:
            self.insert(trajectory.transitions())
        return self

    def clear(self) -> None:
        self._data.clear()

    def as_arrays(self) -> dict[str, np.ndarray]:
        if not self._data:
            raise ValueError("replay buffer is empty")
        return {
            "s": np.stack([tr.s for tr in self._data]),
            "a": np.stack([tr.a for tr in self._data]),
            "r": np.array([tr.r for tr in self._data]),
            "s_next": np.stack([tr.s_next for tr in self._data]),
            "done": np.array([tr.done for tr in self._data], dtype=bool),
        }

    def sample_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniformly drawn stored states (the s of each transition)."""
        if not self._data:
            raise ValueError("replay buffer is empty")
        idx = rng.integers(0, len(self._data), size=n)
        return np.stack([self._data[i].s for i in idx])

    def save(self, path: Path) -> None:
        """Persist as a single trajectory-record stream."""
        data = self.as_arrays()
        write_trajectories(path, [Trajectory(data["s"], data["a"], data["r"], data["s_next"], data["done"])])

    @classmethod
    def load(cls, path: Path, capacity: Optional[int] = None) -> "ReplayBuffer":
        return cls(capacity).insert_trajectories(read_trajectories(path))


def buffer_insert(buffer: ReplayBuffer, transitions: Iterable[Transition]) -> ReplayBuffer:
    """FIFO insert; anything beyond capacity is evicted oldest first."""
    return buffer.insert(transitions)
