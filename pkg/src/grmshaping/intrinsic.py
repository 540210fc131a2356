"""Intrinsic reward producers and the running-mean normaliser.

All producers are future-agnostic: the value emitted for step ``t`` is a
function of the run's transitions up to and including step ``t``.
"""

from __future__ import annotations

import copy
import math
from collections import defaultdict
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .mdp_core import EpisodeContext, EpisodicEnv, StepOutcome


class IntrinsicModule:
    """Base class. ``observe`` is called once per step, in order."""

    def start_episode(self, state: int) -> None:
        pass

    def observe(self, step: StepOutcome, context: EpisodeContext) -> float:
        raise NotImplementedError


class CountBonus(IntrinsicModule):
    """alpha / n(s) for the state just entered, with per-episode counts.

    The episode's start state counts as one visit. ``key`` can coarsen states
    before counting (e.g. drop the door flag in the key/door grid).
    """

    def __init__(self, alpha: float, key: Optional[Callable[[int], Hashable]] = None):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = alpha
        self.key = key
        self.counts: dict[Hashable, int] = defaultdict(int)

    def _k(self, state: int) -> Hashable:
        return state if self.key is None else self.key(state)

    def start_episode(self, state: int) -> None:
        self.counts = defaultdict(int)
        self.counts[self._k(state)] = 1

    def count_bonus(self, state: int) -> float:
        k = self._k(state)
        self.counts[k] += 1
        return self.alpha / self.counts[k]

    def observe(self, step: StepOutcome, context: EpisodeContext) -> float:
        return self.count_bonus(step.next_state)


class RndLite(IntrinsicModule):
    """Random network distillation on one-hot states.

    Target and predictor are ``one-hot -> tanh(hidden) -> linear(features)``
    maps with weights drawn from U(-0.5, 0.5). The reward is ``scale`` times
    the mean squared prediction error for the entered state; each query then
    takes one plain SGD step on that error. The target never changes and
    persists across episodes, as does the predictor.
    """

    def __init__(
        self,
        num_states: int,
        hidden: int = 16,
        features: int = 8,
        lr: float = 1e-6,
        scale: float = 1000.0,
        seed: Optional[int] = None,
        init_range: float = 0.5,
    ):
        rng = np.random.default_rng(seed)
        self.num_states = num_states
        self.lr = lr
        self.scale = scale

        def init(*shape):
            return rng.uniform(-init_range, init_range, size=shape)

        self.target = (init(hidden, num_states), init(hidden), init(features, hidden), init(features))
        # Predictor storage is laid out for the one-column-per-step access
        # pattern: W1 is kept transposed and b2 rides as an extra W2 column.
        # W1, W2, b2 are views into it.
        self._w1t = np.ascontiguousarray(init(hidden, num_states).T)
        self.b1 = init(hidden)
        self._w2b = np.empty((features, hidden + 1))
        self._w2b[:, :hidden] = init(features, hidden)
        self._w2b[:, hidden] = init(features)
        self._h = np.ones(hidden + 1)
        # One-hot inputs make the target a per-state lookup. It is built with
        # the same ops as the predictor pass so identical weights give a zero error.
        tW1, tb1, tW2, tb2 = self.target
        tw2b = np.hstack([tW2, tb2[:, None]])
        h = np.ones(hidden + 1)
        self._target_out = np.empty((num_states, features))
        for s in range(num_states):
            np.tanh(tW1[:, s] + tb1, out=h[:-1])
            self._target_out[s] = tw2b @ h
        self._target_out.setflags(write=False)

    @property
    def W1(self) -> np.ndarray:
        return self._w1t.T

    @property
    def W2(self) -> np.ndarray:
        return self._w2b[:, :-1]

    @property
    def b2(self) -> np.ndarray:
        return self._w2b[:, -1]

    def copy_target_into_predictor(self) -> None:
        tW1, tb1, tW2, tb2 = self.target
        np.copyto(self.W1, tW1)
        np.copyto(self.b1, tb1)
        np.copyto(self.W2, tW2)
        np.copyto(self.b2, tb2)

    def _forward(self, state: int) -> np.ndarray:
        h = self._h
        np.tanh(self._w1t[state] + self.b1, out=h[:-1])
        return self._w2b @ h - self._target_out[state]

    def error(self, state: int) -> float:
        """Unscaled mean squared error, no update."""
        diff = self._forward(state)
        return float(diff @ diff) / diff.size

    def rnd_reward_and_update(self, state: int) -> float:
        diff = self._forward(state)
        mse = float(diff @ diff) / diff.size
        if not math.isfinite(mse):
            raise FloatingPointError(f"RND error is not finite for state {state}")
        if self.lr:
            h = self._h
            g_out = diff * (2.0 * self.lr / diff.size)
            hid = h[:-1]
            g_pre = (g_out @ self._w2b[:, :-1]) * (1.0 - hid * hid)
            self._w2b -= g_out[:, None] * h
            self._w1t[state] -= g_pre
            self.b1 -= g_pre
        return self.scale * mse

    def observe(self, step: StepOutcome, context: EpisodeContext) -> float:
        return self.rnd_reward_and_update(step.next_state)


class RunningMean:
    """Cumulative mean of every value folded in so far."""

    def __init__(self, count: int = 0, mean: float = 0.0):
        if count < 0:
            raise ValueError("count must be non-negative")
        self.count = count
        self._total = mean * count

    @property
    def mean(self) -> float:
        return self._total / self.count if self.count else 0.0

    def update(self, value: float) -> None:
        self.count += 1
        self._total += value

    def normalize(self, f_raw: float) -> float:
        """``f_raw`` minus the mean of strictly earlier values; then fold it in."""
        adjusted = f_raw - self.mean
        self.update(f_raw)
        return adjusted


def normalize(f_raw: float, mean_state: RunningMean) -> float:
    return mean_state.normalize(f_raw)


def _play(env: EpisodicEnv, actions: Sequence[int]) -> list[StepOutcome]:
    env.reset()
    steps = []
    for a in actions:
        out = env.step(a)
        steps.append(out)
        if out.done:
            break
    return steps


def future_agnosticism_probe(
    module: IntrinsicModule,
    env: EpisodicEnv,
    prefix: Sequence[int],
    futures: Sequence[Sequence[int]],
) -> bool:
    """Check that rewards on a shared prefix ignore how the episode continues.

    Each continuation is played out in ``env`` (which must be deterministic),
    then replayed through a fresh copy of ``module`` with the *complete*
    episode visible in the context. True iff every copy emits identical
    rewards along the prefix.
    """
    seen = []
    for future in futures:
        steps = _play(env, list(prefix) + list(future))
        states = [steps[0].state] + [s.next_state for s in steps] if steps else []
        actions = [s.action for s in steps]
        clone = copy.deepcopy(module)
        clone.start_episode(states[0] if states else env.reset())
        rewards = []
        for t, step in enumerate(steps[: len(prefix)]):
            rewards.append(clone.observe(step, EpisodeContext(states, actions, t)))
        seen.append(rewards)
    return all(r == seen[0] for r in seen[1:])
