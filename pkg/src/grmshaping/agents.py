"""Tabular Q-learning with epsilon-greedy exploration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import StepOutcome


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    decay_per_episode: float = 5e-3
    floor: float = 0.1

    def __call__(self, episode: int) -> float:
        return max(self.floor, self.start - episode * self.decay_per_episode)


@dataclass(frozen=True)
class QLearningConfig:
    learning_rate: float = 0.1
    gamma: float = 0.99
    episodes: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")


class QTable:
    """Dense Q(s, a) table, zero-initialised.

    Rows are plain Python lists: the learners touch one row at a time and
    list indexing is much cheaper than numpy scalar access in a hot loop.
    """

    def __init__(self, num_states: int, num_actions: int):
        self.num_states = num_states
        self.num_actions = num_actions
        self.rows = [[0.0] * num_actions for _ in range(num_states)]

    @property
    def values(self) -> np.ndarray:
        return np.array(self.rows)

    @classmethod
    def from_array(cls, values) -> "QTable":
        values = np.asarray(values, dtype=float)
        table = cls(*values.shape)
        table.rows = values.tolist()
        return table

    def __getitem__(self, idx):
        s, a = idx
        return self.rows[s][a]

    def __setitem__(self, idx, value):
        s, a = idx
        self.rows[s][a] = value


def q_update(table: QTable, transition: StepOutcome, shaped_total_reward: float, cfg: QLearningConfig) -> None:
    """One-step Q-learning backup; no bootstrap through terminated transitions."""
    r = shaped_total_reward
    if not math.isfinite(r):
        raise FloatingPointError(f"non-finite reward {r}")
    row = table.rows[transition.state]
    target = r if transition.terminated else r + cfg.gamma * max(table.rows[transition.next_state])
    a = transition.action
    row[a] += cfg.learning_rate * (target - row[a])


def select_action(table: QTable, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties are broken uniformly at random."""
    n = table.num_actions
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(n))
    row = table.rows[s]
    best = max(row)
    ties = [a for a in range(n) if row[a] == best]
    return ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]


def greedy_policy(table: QTable) -> list[int]:
    """Argmax per state, lowest index on ties."""
    return [row.index(max(row)) for row in table.rows]
