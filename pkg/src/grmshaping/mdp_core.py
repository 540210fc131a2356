"""Episodic MDP plumbing: step records, trajectories, returns and rollouts."""

from __future__ import annotations

import abc
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import ContractViolation

# Beyond this many steps gamma**k is evaluated in log space with an overflow check.
LOG_SPACE_DELAY = 200

CSV_HEADER = ("t", "state", "action", "extrinsic", "intrinsic_raw", "intrinsic_shaped")


def discount_power(gamma: float, k: int) -> float:
    """Return gamma**k, including negative k, guarding against overflow."""
    if abs(k) <= LOG_SPACE_DELAY:
        return gamma**k
    value = math.exp(k * math.log(gamma))
    if not math.isfinite(value):
        raise OverflowError(f"gamma**{k} overflows for gamma={gamma}")
    return value


def discounted_return(rewards: Sequence[float], gamma: float, t: int = 0) -> float:
    """Discounted sum of ``rewards[t:]`` with the first term undiscounted."""
    n = len(rewards)
    if not 0 <= t <= n:
        raise IndexError(f"t={t} outside [0, {n}]")
    total = 0.0
    for r in reversed(rewards[t:]):
        total = r + gamma * total
    return total


@dataclass(frozen=True, slots=True)
class StepOutcome:
    state: int
    action: int
    next_state: int
    extrinsic_reward: float
    terminated: bool
    truncated: bool
    timestep: int

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class EpisodicEnv(abc.ABC):
    """Finite, enumerable episodic environment.

    Subclasses set ``num_states``, ``num_actions``, ``gamma`` and ``max_steps``
    and implement :meth:`reset` and :meth:`step`. Episodes are cut at
    ``max_steps`` with ``truncated=True``.
    """

    num_states: int
    num_actions: int
    gamma: float
    max_steps: int

    @abc.abstractmethod
    def reset(self) -> int:
        ...

    @abc.abstractmethod
    def step(self, action: int) -> StepOutcome:
        ...


@dataclass(frozen=True)
class EpisodeContext:
    """What an intrinsic module may look at when scoring step ``t``.

    During a live rollout ``states``/``actions`` only hold the past and
    present. Replay tools may hand over a complete episode, so well-behaved
    modules must not read past index ``t`` (actions) or ``t + 1`` (states).
    """

    states: Sequence[int]
    actions: Sequence[int]
    t: int


class IntrinsicSource(Protocol):
    def start_episode(self, state: int) -> None: ...

    def observe(self, step: StepOutcome, context: EpisodeContext) -> float: ...


class Shaper(Protocol):
    def reset(self) -> None: ...

    def step(self, f_t: float, is_final: bool) -> float: ...


class Normalizer(Protocol):
    def normalize(self, f_raw: float) -> float: ...


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    actions: tuple[int, ...]
    extrinsic: tuple[float, ...]
    intrinsic_raw: Optional[tuple[float, ...]] = None
    intrinsic_shaped: Optional[tuple[float, ...]] = None
    terminated: bool = False

    def __post_init__(self) -> None:
        n = len(self.actions)
        if len(self.states) != n + 1 or len(self.extrinsic) != n:
            raise ValueError("trajectory list lengths are inconsistent")
        for stream in (self.intrinsic_raw, self.intrinsic_shaped):
            if stream is not None and len(stream) != n:
                raise ValueError("intrinsic stream length does not match actions")

    @property
    def length(self) -> int:
        return len(self.actions)

    def extrinsic_return(self, gamma: float = 1.0) -> float:
        return discounted_return(self.extrinsic, gamma)

    def to_csv(self, dest: str | Path | io.TextIOBase | None = None) -> str:
        """Write one line per step; returns the CSV text as well."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t in range(self.length):
            writer.writerow([
                t,
                self.states[t],
                self.actions[t],
                repr(self.extrinsic[t]),
                "" if self.intrinsic_raw is None else repr(self.intrinsic_raw[t]),
                "" if self.intrinsic_shaped is None else repr(self.intrinsic_shaped[t]),
            ])
        text = buf.getvalue()
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        elif dest is not None:
            dest.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, final_state: int) -> "Trajectory":
        """Inverse of :meth:`to_csv`. The CSV does not hold s_N, so pass it in."""
        rows = list(csv.DictReader(io.StringIO(text)))
        states = [int(r["state"]) for r in rows] + [final_state]
        raw = [r["intrinsic_raw"] for r in rows]
        shaped = [r["intrinsic_shaped"] for r in rows]
        return cls(
            states=tuple(states),
            actions=tuple(int(r["action"]) for r in rows),
            extrinsic=tuple(float(r["extrinsic"]) for r in rows),
            intrinsic_raw=tuple(map(float, raw)) if rows and all(raw) else None,
            intrinsic_shaped=tuple(map(float, shaped)) if rows and all(shaped) else None,
        )


Policy = Callable[[int, np.random.Generator], int]
StepHook = Callable[[StepOutcome, float], None]


def rollout(
    env: EpisodicEnv,
    policy: Policy,
    intrinsic: Optional[IntrinsicSource] = None,
    shaper: Optional[Shaper] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    normalizer: Optional[Normalizer] = None,
    on_step: Optional[StepHook] = None,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Play one episode.

    Per step the intrinsic reward (if any) is optionally mean-adjusted by
    ``normalizer`` and then passed through ``shaper``. ``on_step`` receives the
    step and the intrinsic amount an agent should add to the extrinsic reward;
    learners hook in there. ``max_steps`` stops early (before the env's own
    cap); the shaper then settles at that step.
    """
    rng = rng if rng is not None else np.random.default_rng()
    state = env.reset()
    if intrinsic is not None:
        intrinsic.start_episode(state)
    if shaper is not None:
        shaper.reset()

    states = [state]
    actions: list[int] = []
    extrinsic: list[float] = []
    raw: list[float] = []
    shaped: list[float] = []
    terminated = False

    limit = env.max_steps if max_steps is None else min(max_steps, env.max_steps)
    for t in range(limit):
        action = policy(state, rng)
        if not (isinstance(action, (int, np.integer)) and 0 <= action < env.num_actions):
            raise ContractViolation(f"policy returned invalid action {action!r}")
        action = int(action)
        outcome = env.step(action)
        actions.append(action)
        states.append(outcome.next_state)
        extrinsic.append(outcome.extrinsic_reward)

        bonus = 0.0
        if intrinsic is not None:
            f = intrinsic.observe(outcome, EpisodeContext(states, actions, t))
            raw.append(f)
            bonus = normalizer.normalize(f) if normalizer is not None else f
        if shaper is not None:
            bonus = shaper.step(bonus, outcome.done or t == limit - 1)
            shaped.append(bonus)
        if on_step is not None:
            on_step(outcome, bonus)

        state = outcome.next_state
        if outcome.done:
            terminated = outcome.terminated
            break

    return Trajectory(
        states=tuple(states),
        actions=tuple(actions),
        extrinsic=tuple(extrinsic),
        intrinsic_raw=tuple(raw) if intrinsic is not None else None,
        intrinsic_shaped=tuple(shaped) if shaper is not None else None,
        terminated=terminated,
    )


def replay(env: EpisodicEnv, actions: Sequence[int]) -> Trajectory:
    """Re-run a recorded action sequence through a (deterministic) env."""
    it = iter(actions)
    return rollout(env, lambda s, rng: next(it), max_steps=len(actions))
