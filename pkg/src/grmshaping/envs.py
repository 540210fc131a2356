"""Tabular environments: cliff walking, a key/door grid, and random MDPs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, ConfigError
from .mdp_core import EpisodicEnv, StepOutcome

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
PICKUP, TOGGLE = 4, 5
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
ARROWS = {UP: "^", DOWN: "v", LEFT: "<", RIGHT: ">", PICKUP: "p", TOGGLE: "t"}

NODE_CAP = 20
POLICY_CAP = 10**6


@dataclass
class TabularMdp:
    """Explicit finite-horizon MDP.

    ``transitions[s, a, s2]`` is P(s2 | s, a), ``rewards[s, a, s2]`` the reward
    of that transition. Episodes end on entering a terminal state or after
    ``horizon`` steps.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: frozenset[int]
    initial: np.ndarray
    gamma: float
    horizon: int

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        self.terminal = frozenset(int(s) for s in self.terminal)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != self.transitions.shape:
            raise ConfigError("transition/reward tables must be (S, A, S)")
        if self.initial.shape != (s,):
            raise ConfigError("initial distribution must have one entry per state")
        if np.any(self.transitions < 0) or np.any(np.abs(self.transitions.sum(axis=2) - 1) > 1e-12):
            raise ConfigError("every transition row must be a distribution")
        if abs(self.initial.sum() - 1) > 1e-12:
            raise ConfigError("initial distribution must sum to 1")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def successors(self, s: int, a: int) -> list[tuple[int, float, float]]:
        """(next_state, probability, reward) for every outcome with p > 0."""
        row = self.transitions[s, a]
        return [(int(s2), float(row[s2]), float(self.rewards[s, a, s2])) for s2 in np.flatnonzero(row)]

    def history_node_count(self, cap: int = NODE_CAP) -> int:
        """Number of reachable decision points (histories ending in a live state).

        Counting stops once ``cap`` is exceeded, so the return value is at most
        ``cap + 1``.
        """
        count = 0
        frontier = [int(s) for s in np.flatnonzero(self.initial)]
        for t in range(self.horizon):
            nxt = []
            for s in frontier:
                if s in self.terminal:
                    continue
                count += 1
                if count > cap:
                    return count
                if t + 1 < self.horizon:
                    for a in range(self.num_actions):
                        nxt.extend(s2 for s2, _, _ in self.successors(s, a))
            frontier = nxt
        return count

    def to_json(self) -> str:
        return json.dumps({
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "terminal": sorted(self.terminal),
            "initial": self.initial.tolist(),
            "gamma": self.gamma,
            "horizon": self.horizon,
        })

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        d = json.loads(text)
        try:
            return cls(
                transitions=np.array(d["transitions"]),
                rewards=np.array(d["rewards"]),
                terminal=frozenset(d.get("terminal", [])),
                initial=np.array(d["initial"]),
                gamma=float(d["gamma"]),
                horizon=int(d["horizon"]),
            )
        except KeyError as exc:
            raise ConfigError(f"missing MDP field {exc}") from None


class TabularEnv(EpisodicEnv):
    """Sampling front end for a :class:`TabularMdp`."""

    def __init__(self, mdp: TabularMdp, seed: Optional[int] = None):
        self.mdp = mdp
        self.num_states = mdp.num_states
        self.num_actions = mdp.num_actions
        self.gamma = mdp.gamma
        self.max_steps = mdp.horizon
        self.rng = np.random.default_rng(seed)
        self._state = 0
        self._t = 0

    def reset(self) -> int:
        self._state = int(self.rng.choice(self.num_states, p=self.mdp.initial))
        self._t = 0
        return self._state

    def step(self, action: int) -> StepOutcome:
        s = self._state
        s2 = int(self.rng.choice(self.num_states, p=self.mdp.transitions[s, action]))
        r = float(self.mdp.rewards[s, action, s2])
        self._t += 1
        terminated = s2 in self.mdp.terminal
        truncated = not terminated and self._t >= self.max_steps
        self._state = s2
        return StepOutcome(s, action, s2, r, terminated, truncated, self._t - 1)


class DeterministicGridEnv(EpisodicEnv):
    """Deterministic env backed by a precomputed (next, reward, terminal) table."""

    start_state: int

    def _build(self) -> None:
        self._table = [
            [self.transition(s, a) for a in range(self.num_actions)]
            for s in range(self.num_states)
        ]
        self._state = self.start_state
        self._t = 0

    def transition(self, s: int, a: int) -> tuple[int, float, bool]:
        raise NotImplementedError

    def is_absorbing(self, s: int) -> bool:
        return False

    def reset(self) -> int:
        self._state = self.start_state
        self._t = 0
        return self._state

    def step(self, action: int) -> StepOutcome:
        s = self._state
        s2, r, terminated = self._table[s][action]
        t = self._t
        self._t = t + 1
        self._state = s2
        return StepOutcome(s, action, s2, r, terminated, not terminated and t + 1 >= self.max_steps, t)

    def to_mdp(self, gamma: Optional[float] = None, horizon: Optional[int] = None) -> TabularMdp:
        n, m = self.num_states, self.num_actions
        P = np.zeros((n, m, n))
        R = np.zeros((n, m, n))
        terminal = set()
        for s in range(n):
            if self.is_absorbing(s):
                terminal.add(s)
                P[s, :, s] = 1.0
                continue
            for a in range(m):
                s2, r, term = self._table[s][a]
                P[s, a, s2] = 1.0
                R[s, a, s2] = r
                if term:
                    terminal.add(s2)
        init = np.zeros(n)
        init[self.start_state] = 1.0
        return TabularMdp(P, R, frozenset(terminal), init,
                          self.gamma if gamma is None else gamma,
                          self.max_steps if horizon is None else horizon)


@dataclass(frozen=True)
class CliffWalkConfig:
    width: int = 12
    height: int = 4
    step_reward: float = -1.0
    cliff_reward: float = -100.0
    goal_reward: float = 100.0
    max_steps: int = 50
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if self.width < 3 or self.height < 2:
            raise ConfigError("cliff walk needs width >= 3 and height >= 2")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")


class CliffWalkEnv(DeterministicGridEnv):
    """Slip-free cliff walk. Row 0 is the top; start/goal sit in the bottom corners."""

    num_actions = 4

    def __init__(self, config: CliffWalkConfig = CliffWalkConfig()):
        self.config = config
        self.width, self.height = config.width, config.height
        self.num_states = config.width * config.height
        self.gamma = config.gamma
        self.max_steps = config.max_steps
        bottom = config.height - 1
        self.start_state = self.index(bottom, 0)
        self.goal_state = self.index(bottom, config.width - 1)
        self.cliff_states = frozenset(self.index(bottom, c) for c in range(1, config.width - 1))
        self._build()

    def index(self, row: int, col: int) -> int:
        return row * self.width + col

    def position(self, s: int) -> tuple[int, int]:
        return divmod(s, self.width)

    def is_absorbing(self, s: int) -> bool:
        return s in self.cliff_states or s == self.goal_state

    def transition(self, s: int, a: int) -> tuple[int, float, bool]:
        row, col = self.position(s)
        dr, dc = MOVES[a]
        r2, c2 = row + dr, col + dc
        if not (0 <= r2 < self.height and 0 <= c2 < self.width):
            return s, self.config.step_reward, False
        s2 = self.index(r2, c2)
        if s2 in self.cliff_states:
            return s2, self.config.cliff_reward, True
        if s2 == self.goal_state:
            return s2, self.config.goal_reward, True
        return s2, self.config.step_reward, False

    def render_policy(self, policy: dict[int, int] | list[int]) -> str:
        """ASCII grid of arrows; S/G/C mark start, goal and cliff."""
        lines = []
        for row in range(self.height):
            cells = []
            for col in range(self.width):
                s = self.index(row, col)
                if s == self.goal_state:
                    cells.append("G")
                elif s in self.cliff_states:
                    cells.append("C")
                else:
                    cells.append(ARROWS[policy[s]])
            lines.append("".join(cells))
        return "\n".join(lines)


def cliff_walk(config: CliffWalkConfig = CliffWalkConfig()) -> CliffWalkEnv:
    """Cliff-walking env; ``.to_mdp()`` gives the explicit table view."""
    return CliffWalkEnv(config)


def long_cliff_walk(**overrides) -> CliffWalkEnv:
    """4 x 50 cliff walk capped at 100 steps."""
    params = dict(width=50, height=4, max_steps=100)
    params.update(overrides)
    return CliffWalkEnv(CliffWalkConfig(**params))


@dataclass(frozen=True)
class KeyDoorConfig:
    """Fully observable key/door room pair split by a vertical wall.

    The door sits in the wall column; the key and start are left of the wall,
    the goal right of it.
    """

    width: int = 5
    height: int = 4
    wall_col: int = 2
    door_row: int = 1
    start: tuple[int, int] = (0, 0)
    key: tuple[int, int] = (3, 0)
    goal: tuple[int, int] = (3, 4)
    max_steps: int = 100
    goal_reward: float = 1.0
    step_reward: float = 0.0
    gamma: float = 0.995

    def __post_init__(self) -> None:
        if not 0 < self.wall_col < self.width - 1:
            raise ConfigError("wall must leave room on both sides")
        if not 0 <= self.door_row < self.height:
            raise ConfigError("door must be inside the wall")
        for name in ("start", "key"):
            r, c = getattr(self, name)
            if not (0 <= r < self.height and 0 <= c < self.wall_col):
                raise ConfigError(f"{name} must be left of the wall")
        r, c = self.goal
        if not (0 <= r < self.height and self.wall_col < c < self.width):
            raise ConfigError("goal must be right of the wall")


class KeyDoorEnv(DeterministicGridEnv):
    """Grid where the goal is only reachable through a locked door.

    State = (row, col, has_key, door_open). Actions: up, down, left, right,
    pickup, toggle. Pickup works on the key tile; toggle opens the door when
    the agent holds the key and stands next to the door. Everything except
    reaching the goal pays ``step_reward``.
    """

    num_actions = 6

    def __init__(self, config: KeyDoorConfig = KeyDoorConfig()):
        self.config = config
        self.width, self.height = config.width, config.height
        self.num_states = config.width * config.height * 4
        self.gamma = config.gamma
        self.max_steps = config.max_steps
        self.door = (config.door_row, config.wall_col)
        self.start_state = self.encode(*config.start, False, False)
        self._build()

    def encode(self, row: int, col: int, has_key: bool, door_open: bool) -> int:
        return ((row * self.width + col) * 2 + int(has_key)) * 2 + int(door_open)

    def decode(self, s: int) -> tuple[int, int, bool, bool]:
        s, door_open = divmod(s, 2)
        s, has_key = divmod(s, 2)
        row, col = divmod(s, self.width)
        return row, col, bool(has_key), bool(door_open)

    def position_key(self, s: int) -> tuple[int, int, bool]:
        """Position plus key flag; the granularity the tabular count bonus uses."""
        row, col, has_key, _ = self.decode(s)
        return row, col, has_key

    def is_absorbing(self, s: int) -> bool:
        row, col, _, _ = self.decode(s)
        return (row, col) == self.config.goal

    def _blocked(self, row: int, col: int, door_open: bool) -> bool:
        if not (0 <= row < self.height and 0 <= col < self.width):
            return True
        if col == self.config.wall_col:
            return not ((row, col) == self.door and door_open)
        return False

    def transition(self, s: int, a: int) -> tuple[int, float, bool]:
        cfg = self.config
        row, col, has_key, door_open = self.decode(s)
        if a in MOVES:
            dr, dc = MOVES[a]
            if not self._blocked(row + dr, col + dc, door_open):
                row, col = row + dr, col + dc
        elif a == PICKUP:
            if (row, col) == cfg.key:
                has_key = True
        elif a == TOGGLE:
            adjacent = abs(row - self.door[0]) + abs(col - self.door[1]) == 1
            if adjacent and has_key:
                door_open = True
        s2 = self.encode(row, col, has_key, door_open)
        if (row, col) == cfg.goal:
            return s2, cfg.goal_reward, True
        return s2, cfg.step_reward, False


def key_door(config: KeyDoorConfig = KeyDoorConfig()) -> KeyDoorEnv:
    return KeyDoorEnv(config)


@dataclass(frozen=True)
class RandomMdpConfig:
    num_states: int = 3
    num_actions: int = 2
    horizon: int = 3
    reward_range: tuple[float, float] = (-1.0, 1.0)
    deterministic: bool = True
    seed: int = 0
    max_support: int = 2
    num_terminal: int = 0
    gamma: float = 0.9
    node_cap: int = NODE_CAP

    def __post_init__(self) -> None:
        if not 1 <= self.num_states <= 6:
            raise ConfigError("num_states must be in [1, 6]")
        if not 1 <= self.num_actions <= 3:
            raise ConfigError("num_actions must be in [1, 3]")
        if not 1 <= self.horizon <= 6:
            raise ConfigError("horizon must be in [1, 6]")
        if not 0 <= self.num_terminal < self.num_states:
            raise ConfigError("need at least one non-terminal state")
        if self.max_support < 1:
            raise ConfigError("max_support must be >= 1")


def random_episodic_mdp(config: RandomMdpConfig, rng: Optional[np.random.Generator] = None) -> TabularMdp:
    """Seeded random MDP starting in state 0; the last ``num_terminal`` states absorb.

    Raises :class:`CapacityError` when the history tree is too big for the
    exhaustive oracle.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n, m = config.num_states, config.num_actions
    P = np.zeros((n, m, n))
    for s in range(n):
        for a in range(m):
            if config.deterministic:
                P[s, a, rng.integers(n)] = 1.0
            else:
                k = int(rng.integers(1, min(config.max_support, n) + 1))
                support = rng.choice(n, size=k, replace=False)
                P[s, a, support] = rng.dirichlet(np.ones(k))
                # exact normalisation so rows sum to 1 within 1e-12
                P[s, a, support[-1]] = 1.0 - P[s, a, support[:-1]].sum()
    lo, hi = config.reward_range
    R = rng.uniform(lo, hi, size=(n, m, n))
    terminal = frozenset(range(n - config.num_terminal, n))
    init = np.zeros(n)
    init[0] = 1.0
    mdp = TabularMdp(P, R, terminal, init, config.gamma, config.horizon)
    nodes = mdp.history_node_count(config.node_cap)
    if nodes > config.node_cap or m**nodes > POLICY_CAP:
        raise CapacityError(f"history tree has {nodes} decision nodes (cap {config.node_cap})")
    return mdp
