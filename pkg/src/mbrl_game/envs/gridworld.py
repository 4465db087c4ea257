"""
Goal-conditioned slippery gridworld.

State vector: one-hot cell (size*size entries, cell = row * size + col) followed
by the goal (col, row) scaled to [0, 1]. Actions are one-hot over
{up, down, left, right, stay}; with probability `slip` the executed action is
drawn uniformly from all five. Moving into a wall keeps the agent in place.
Reward is 1 while standing on the goal cell. Episodes never terminate early.
"""

from typing import Optional

import numpy as np

from ..config import EnvConfig
from ..mdp import TabularMdp
from .base import Env, SeedLike, Trajectory

MOVES = np.array([(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)])  # (dcol, drow)
N_ACTIONS = len(MOVES)


class GridWorld(Env):
    name = "gridworld-goal"
    discrete_actions = True
    action_dim = N_ACTIONS
    # slip 0.1 -> 0.3
    default_shift_magnitude = 3.0

    def __init__(self, config: Optional[EnvConfig] = None, seed: SeedLike = 0):
        super().__init__(config or EnvConfig(name=self.name), seed)
        self.size = self.config.grid_size
        self.slip = self.config.slip
        self.fixed_goal = self.config.fixed_goal
        self.goal_region = self.config.goal_region
        self.n_cells = self.size * self.size
        self.state_dim = self.n_cells + 2
        self._next_cell = self._build_next_cell()

    @property
    def reward_bounds(self) -> tuple[float, float]:
        return (0.0, 1.0)

    @property
    def task_coordinates(self) -> np.ndarray:
        return np.arange(self.n_cells)

    # -- cell bookkeeping ----------------------------------------------------

    def _build_next_cell(self) -> np.ndarray:
        """next_cell[cell, action] for deterministic moves."""
        cells = np.arange(self.n_cells)
        col, row = cells % self.size, cells // self.size
        table = np.empty((self.n_cells, N_ACTIONS), dtype=int)
        for a, (dc, dr) in enumerate(MOVES):
            c = np.clip(col + dc, 0, self.size - 1)
            r = np.clip(row + dr, 0, self.size - 1)
            table[:, a] = r * self.size + c
        return table

    def cell_of(self, col: int, row: int) -> int:
        return int(row) * self.size + int(col)

    def goal_columns(self) -> np.ndarray:
        half = self.size // 2
        if self.goal_region == "shifted":
            return np.arange(half, self.size)
        return np.arange(0, half)

    def task_goals(self) -> list[tuple[int, int]]:
        """Every goal the current task distribution can draw."""
        if self.fixed_goal is not None:
            return [tuple(self.fixed_goal)]
        return [(int(col), row) for col in self.goal_columns() for row in range(self.size)]

    def encode(self, cells: np.ndarray, goals: np.ndarray) -> np.ndarray:
        """State vectors from cell indices and (col, row) goals."""
        cells = np.atleast_1d(cells)
        goals = np.atleast_2d(goals)
        states = np.zeros((cells.size, self.state_dim))
        states[np.arange(cells.size), cells] = 1.0
        states[:, self.n_cells:] = goals / (self.size - 1)
        return states

    def cells(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(np.atleast_2d(states)[:, :self.n_cells], axis=1)

    def goals(self, states: np.ndarray) -> np.ndarray:
        scaled = np.atleast_2d(states)[:, self.n_cells:] * (self.size - 1)
        return np.clip(np.rint(scaled), 0, self.size - 1).astype(int)

    def goal_cells(self, states: np.ndarray) -> np.ndarray:
        goals = self.goals(states)
        return goals[:, 1] * self.size + goals[:, 0]

    @staticmethod
    def action_index(actions: np.ndarray) -> np.ndarray:
        return np.argmax(np.atleast_2d(actions), axis=1)

    @staticmethod
    def one_hot_actions(indices: np.ndarray) -> np.ndarray:
        indices = np.atleast_1d(indices)
        actions = np.zeros((indices.size, N_ACTIONS))
        actions[np.arange(indices.size), indices] = 1.0
        return actions

    # -- batch functions -----------------------------------------------------

    def sample_goals(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.fixed_goal is not None:
            return np.tile(np.asarray(self.fixed_goal, dtype=int), (n, 1))
        cols = rng.choice(self.goal_columns(), size=n)
        rows = rng.integers(0, self.size, size=n)
        return np.stack([cols, rows], axis=1)

    def sample_initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        goals = self.sample_goals(n, rng)
        goal_cells = goals[:, 1] * self.size + goals[:, 0]
        # uniform over the other cells
        offsets = rng.integers(0, self.n_cells - 1, size=n)
        cells = (goal_cells + 1 + offsets) % self.n_cells
        return self.encode(cells, goals)

    def transition(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        states = np.atleast_2d(states)
        chosen = self.action_index(actions)
        slipped = rng.random(chosen.size) < self.slip
        executed = np.where(slipped, rng.integers(0, N_ACTIONS, size=chosen.size), chosen)
        next_cells = self._next_cell[self.cells(states), executed]
        return self.encode(next_cells, self.goals(states))

    def next_cell_distribution(self, cells: np.ndarray, action_indices: np.ndarray) -> np.ndarray:
        """P(next cell | cell, action), shape (N, n_cells)."""
        cells = np.atleast_1d(cells)
        action_indices = np.atleast_1d(action_indices)
        probs = np.zeros((cells.size, self.n_cells))
        rows = np.arange(cells.size)
        np.add.at(probs, (rows, self._next_cell[cells, action_indices]), 1.0 - self.slip)
        for b in range(N_ACTIONS):
            np.add.at(probs, (rows, self._next_cell[cells, b]), self.slip / N_ACTIONS)
        return probs

    def expected_next_state(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        expected = states.copy()
        expected[:, :self.n_cells] = self.next_cell_distribution(self.cells(states), self.action_index(actions))
        return expected

    def reward(self, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        return (self.cells(states) == self.goal_cells(states)).astype(np.float64)

    def is_success(self, trajectory: Trajectory) -> bool:
        visited = np.concatenate([trajectory.states, trajectory.next_states])
        return bool(np.any(self.cells(visited) == self.goal_cells(visited)))

    def next_cell_probs(self, predicted: np.ndarray) -> np.ndarray:
        """
        Next-cell distribution read off a predicted one-hot block.

        Negative entries are clipped and the rest renormalized; a row with no
        positive mass puts all of it on its largest entry.
        """
        block = np.atleast_2d(predicted)[:, :self.n_cells]
        weights = np.clip(block, 0.0, None)
        totals = weights.sum(axis=1, keepdims=True)
        empty = totals[:, 0] <= 0.0
        weights[empty] = 0.0
        weights[empty, np.argmax(block[empty], axis=1)] = 1.0
        totals[empty] = 1.0
        return weights / totals

    def decode_model_state(self, predicted: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sample a cell from the predicted one-hot block and snap the goal to the grid."""
        predicted = np.atleast_2d(predicted)
        cdf = np.cumsum(self.next_cell_probs(predicted), axis=1)
        u = rng.random((predicted.shape[0], 1))
        cells = np.minimum((cdf < u).sum(axis=1), self.n_cells - 1)
        return self.encode(cells, self.goals(predicted))

    # -- tabular view --------------------------------------------------------

    def to_tabular(self, goal: tuple[int, int], gamma: float) -> TabularMdp:
        """
        The world for one fixed goal as a TabularMdp over cells.

        rho is uniform over non-goal cells, matching the episode start rule.
        """
        goal_cell = self.cell_of(*goal)
        cells = np.repeat(np.arange(self.n_cells), N_ACTIONS)
        acts = np.tile(np.arange(N_ACTIONS), self.n_cells)
        P = self.next_cell_distribution(cells, acts).reshape(self.n_cells, N_ACTIONS, self.n_cells)
        R = np.zeros(self.n_cells)
        R[goal_cell] = 1.0
        rho = np.full(self.n_cells, 1.0 / (self.n_cells - 1))
        rho[goal_cell] = 0.0
        return TabularMdp(P, R, gamma, rho, r_max=1.0)

    def tabular_states(self, goal: tuple[int, int]) -> np.ndarray:
        """State vector for every cell with the given goal, in tabular order."""
        goals = np.tile(np.asarray(goal, dtype=int), (self.n_cells, 1))
        return self.encode(np.arange(self.n_cells), goals)

    # -- perturbations -------------------------------------------------------

    def _scale_dynamics(self, magnitude: float) -> None:
        self.slip = float(min(self.slip * magnitude, 1.0))

    def _shift_goals(self) -> None:
        if self.fixed_goal is not None:
            col, row = self.fixed_goal
            self.fixed_goal = (self.size - 1 - col, row)
        else:
            self.goal_region = "default" if self.goal_region == "shifted" else "shifted"
