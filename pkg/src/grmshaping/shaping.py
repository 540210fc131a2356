"""Reward matching, PBIM, classic potential shaping and potential constructions.

A matching function says which fraction of the intrinsic reward received at
step ``t'`` is paid back (discounted by ``gamma**(t'-t)``) at a later step
``t``. :class:`GrmShaper` applies it online. Whatever is still outstanding at
the last step of an episode is paid back there, so every reward is matched
exactly once and the discounted sum of the shaped stream is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, MatchingError
from .intrinsic import IntrinsicModule, RunningMean
from .mdp_core import EpisodeContext, StepOutcome, discount_power
from .tree import Path, expand

FRACTION_TOL = 1e-12


class MatchingFunction:
    """Fraction of the reward from ``t_prime`` matched at non-final step ``t``.

    Only ``t_prime <= t`` is ever asked for. Subclasses may override
    :meth:`due` to list the only ``t_prime`` values that can be non-zero at
    ``t``; the default says "any".
    """

    name = "matching"

    def fraction(self, t: int, t_prime: int) -> float:
        raise NotImplementedError

    def due(self, t: int) -> Optional[Iterable[int]]:
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class IdentityMatching(MatchingFunction):
    name = "identity"

    def fraction(self, t: int, t_prime: int) -> float:
        return 1.0 if t == t_prime else 0.0

    def due(self, t: int) -> Iterable[int]:
        return (t,)


class PbimMatching(MatchingFunction):
    """Nothing is matched before the final step."""

    name = "pbim"

    def fraction(self, t: int, t_prime: int) -> float:
        return 0.0

    def due(self, t: int) -> Iterable[int]:
        return ()


class DelayMatching(MatchingFunction):
    """Match each reward exactly ``delay`` steps later, or at the final step."""

    def __init__(self, delay: int):
        if delay < 0:
            raise ConfigError("delay must be >= 0")
        self.delay = delay
        self.name = f"delay-{delay}"

    def fraction(self, t: int, t_prime: int) -> float:
        return 1.0 if t - t_prime == self.delay else 0.0

    def due(self, t: int) -> Iterable[int]:
        return (t - self.delay,) if t >= self.delay else ()


class MatrixMatching(MatchingFunction):
    """Explicit table ``m[t, t_prime]``; rows past the table are zero."""

    def __init__(self, table, name: str = "matrix"):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise MatchingError("matching table must be square")
        if np.any(table < -FRACTION_TOL) or np.any(table > 1 + FRACTION_TOL):
            raise MatchingError("matching fractions must lie in [0, 1]")
        if np.any(np.triu(table, k=1) != 0):
            raise MatchingError("a reward cannot be matched before it is received")
        if np.any(table.sum(axis=0) > 1 + FRACTION_TOL):
            raise MatchingError("a reward is matched more than once")
        self.table = table
        self.name = name

    def fraction(self, t: int, t_prime: int) -> float:
        if t < self.table.shape[0]:
            return float(self.table[t, t_prime])
        return 0.0


def parse_matching(spec: str) -> Optional[MatchingFunction]:
    """``identity``, ``pbim``, ``delay-<D>`` / ``grm_delay-<D>``; ``raw``/``none`` give None."""
    spec = spec.strip().lower()
    if spec in ("raw", "none"):
        return None
    if spec == "identity":
        return IdentityMatching()
    if spec == "pbim":
        return PbimMatching()
    for prefix in ("delay-", "grm_delay-", "d"):
        if spec.startswith(prefix) and spec[len(prefix):].isdigit():
            return DelayMatching(int(spec[len(prefix):]))
    raise ConfigError(f"unknown matching spec {spec!r}")


class GrmShaper:
    """Streaming reward-matching transform for one episode at a time.

    The ledger maps ``t'`` to ``[F_t', remaining_fraction, matched_so_far]``.
    """

    def __init__(self, matching: MatchingFunction, gamma: float):
        if not 0 < gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        self.matching = matching
        self.gamma = gamma
        self.reset()

    def reset(self) -> None:
        self.ledger: dict[int, list[float]] = {}
        self.t = 0
        self.closed = False

    def _take(self, t: int, i: int, frac: float) -> float:
        entry = self.ledger[i]
        if not -FRACTION_TOL <= frac <= 1 + FRACTION_TOL:
            raise MatchingError(f"fraction({t}, {i}) = {frac} outside [0, 1]")
        if frac > entry[1] + FRACTION_TOL:
            raise MatchingError(f"reward from step {i} would be matched more than once")
        frac = min(frac, entry[1])
        entry[1] -= frac
        entry[2] += frac
        return discount_power(self.gamma, i - t) * entry[0] * frac

    def step(self, f_t: float, is_final: bool) -> float:
        if self.closed:
            raise RuntimeError("episode already settled; call reset() first")
        t = self.t
        self.ledger[t] = [f_t, 1.0, 0.0]
        matched = 0.0
        if is_final:
            for i, (_, remaining, _) in list(self.ledger.items()):
                if remaining > 0:
                    matched += self._take(t, i, remaining)
            self.ledger.clear()
            self.closed = True
        else:
            due = self.matching.due(t)
            candidates = list(self.ledger) if due is None else [i for i in due if i in self.ledger]
            for i in candidates:
                frac = self.matching.fraction(t, i)
                if frac:
                    matched += self._take(t, i, frac)
                    if self.ledger[i][1] <= 0.0:
                        del self.ledger[i]
        self.t = t + 1
        return f_t - matched


def grm_step(shaper: GrmShaper, f_t: float, is_final: bool) -> float:
    return shaper.step(f_t, is_final)


def grm_transform(f: Sequence[float], gamma: float, matching: MatchingFunction) -> list[float]:
    """Shape a whole episode's intrinsic stream in one call."""
    shaper = GrmShaper(matching, gamma)
    n = len(f)
    return [shaper.step(x, t == n - 1) for t, x in enumerate(f)]


def mean_adjust(f: Sequence[float], mean_source: RunningMean) -> list[float]:
    return [mean_source.normalize(x) for x in f]


def pbim_transform(
    f: Sequence[float],
    gamma: float,
    normalized: bool = False,
    mean_source: Optional[RunningMean] = None,
) -> list[float]:
    """Pay rewards as they come, then cancel their discounted sum at the last step.

    With ``normalized`` each value first has the running mean of earlier raw
    values subtracted (``mean_source`` is updated in place).
    """
    if not f:
        raise ValueError("pbim_transform needs a non-empty stream")
    if normalized:
        f = mean_adjust(f, mean_source if mean_source is not None else RunningMean())
    n = len(f)
    last = -sum(discount_power(gamma, k + 1 - n) * f[k] for k in range(n - 1))
    return list(f[:-1]) + [last]


def effective_matching(matching: MatchingFunction, n: int) -> np.ndarray:
    """Settled matching table for an ``n``-step episode.

    Rows ``0..n-2`` come from ``matching``; row ``n-1`` holds whatever each
    column still has outstanding.
    """
    m = np.zeros((n, n))
    for t in range(n - 1):
        for i in range(t + 1):
            frac = matching.fraction(t, i)
            if not -FRACTION_TOL <= frac <= 1 + FRACTION_TOL:
                raise MatchingError(f"fraction({t}, {i}) = {frac} outside [0, 1]")
            m[t, i] = frac
    used = m.sum(axis=0)
    if np.any(used > 1 + FRACTION_TOL):
        raise MatchingError("a reward is matched more than once")
    m[n - 1, :] = np.clip(1.0 - used, 0.0, 1.0)
    return m


def grm_potential(matching: MatchingFunction, f: Sequence[float], gamma: float, C: float = 0.0) -> np.ndarray:
    """Potentials Phi_0..Phi_N whose differences gamma*Phi_{t+1} - Phi_t are the shaped rewards."""
    n = len(f)
    f = np.asarray(f, dtype=float)
    m = effective_matching(matching, n)
    phi = np.empty(n + 1)
    phi[n] = C
    # U_t, and the double sum over j >= t, built backwards
    to_go = 0.0
    for t in range(n - 1, -1, -1):
        to_go = f[t] + gamma * to_go
        acc = 0.0
        for j in range(t, n):
            for i in range(j + 1):
                if m[j, i]:
                    acc += discount_power(gamma, i - t) * f[i] * m[j, i]
        phi[t] = acc - to_go + discount_power(gamma, n - t) * C
    return phi


def f_from_potential(
    matching: MatchingFunction,
    phi: Sequence[float],
    gamma: float,
    check_boundary: bool = True,
    atol: float = 1e-9,
) -> np.ndarray:
    """Intrinsic stream whose matched version reproduces gamma*Phi_{t+1} - Phi_t.

    Solved forwards for ``t < N-1``. The last step's own reward is always
    fully self-matched, so it is set to 0 and cannot influence the output;
    the last shaped reward is pinned by the zero discounted sum instead. The
    round trip is therefore exact only when ``gamma**N * Phi_N == Phi_0``,
    which ``check_boundary`` enforces.
    """
    phi = np.asarray(phi, dtype=float)
    n = len(phi) - 1
    if n < 1:
        raise ValueError("need at least Phi_0 and Phi_1")
    if check_boundary:
        gap = discount_power(gamma, n) * phi[n] - phi[0]
        if abs(gap) > atol * max(1.0, float(np.max(np.abs(phi)))):
            raise ValueError(
                f"gamma^N*Phi_N - Phi_0 = {gap:.3g}; a matched stream always has zero "
                "discounted sum, so only potentials with gamma^N*Phi_N == Phi_0 round-trip"
            )
    m = effective_matching(matching, n)
    out = np.zeros(n)
    for t in range(n - 1):
        if abs(1.0 - m[t, t]) <= FRACTION_TOL:
            raise MatchingError(f"fraction({t}, {t}) == 1 leaves F_{t} undetermined")
        carry = sum(discount_power(gamma, i - t) * out[i] * m[t, i] for i in range(t))
        out[t] = (gamma * phi[t + 1] - phi[t] + carry) / (1.0 - m[t, t])
    return out


@dataclass(frozen=True)
class BoundaryReport:
    residuals: dict[tuple[tuple[int, ...], int], float]
    spreads: dict[tuple[int, ...], float]

    @property
    def max_spread(self) -> float:
        return max(self.spreads.values(), default=0.0)


PathPotential = Callable[[Path, int], float]


def boundary_residual(
    mdp,
    potential: PathPotential,
    gamma: Optional[float] = None,
    continuation: Optional[Callable[[tuple[int, ...]], Sequence[float]]] = None,
    node_cap: int = 20,
) -> BoundaryReport:
    """Exact E[gamma^(N-t) Phi_N - Phi_t | history, a_t] for every decision node.

    ``potential(path, k)`` gives Phi_k on a complete path. Future actions
    after ``a_t`` follow ``continuation(history) -> action probabilities``
    (uniform by default). A zero spread across actions at every node is the
    sufficient condition for leaving optimal policies unchanged.
    """
    gamma = mdp.gamma if gamma is None else gamma
    tree = expand(mdp, node_cap)
    m = mdp.num_actions
    uniform = [1.0 / m] * m
    residuals: dict[tuple[tuple[int, ...], int], float] = {}
    for path in tree.paths:
        n = path.length
        hists = [path.history(k) for k in range(n)]
        pol = [
            (continuation(h) if continuation is not None else uniform)[path.actions[k]]
            for k, h in enumerate(hists)
        ]
        phi_n = potential(path, n)
        for t in range(n):
            w = 1.0
            for k in range(t, n):
                w *= path.trans_probs[k]
                if k > t:
                    w *= pol[k]
            if w == 0.0:
                continue
            key = (hists[t], path.actions[t])
            value = discount_power(gamma, n - t) * phi_n - potential(path, t)
            residuals[key] = residuals.get(key, 0.0) + w * value
    by_node: dict[tuple[int, ...], list[float]] = {}
    for (hist, _a), value in residuals.items():
        by_node.setdefault(hist, []).append(value)
    spreads = {h: max(v) - min(v) for h, v in by_node.items()}
    return BoundaryReport(residuals, spreads)


@dataclass
class StatePotential:
    phi: Mapping[int, float] | Sequence[float]
    grzes_final_zero: bool = False

    def __post_init__(self) -> None:
        values = self.phi.values() if isinstance(self.phi, Mapping) else self.phi
        if not all(math.isfinite(float(v)) for v in values):
            raise ValueError("potential values must be finite")

    def __call__(self, s: int) -> float:
        return float(self.phi[s])


def classic_pbrs_step(pot: StatePotential, s: int, s_next: int, gamma: float, is_final: bool) -> float:
    """gamma*Phi(s') - Phi(s), with Phi(s') taken as 0 on the final step if requested."""
    nxt = 0.0 if (is_final and pot.grzes_final_zero) else pot(s_next)
    return gamma * nxt - pot(s)


class PotentialBonus(IntrinsicModule):
    """Classic state-potential shaping presented as a per-step bonus stream."""

    def __init__(self, potential: StatePotential, gamma: float):
        self.potential = potential
        self.gamma = gamma

    def observe(self, step: StepOutcome, context: EpisodeContext) -> float:
        return classic_pbrs_step(self.potential, step.state, step.next_state, self.gamma, step.done)


def vstar_potential(mdp, grzes_final_zero: bool = True) -> StatePotential:
    """Phi(s) = V*(s) from finite-horizon backward induction at t = 0."""
    from .oracle import value_iteration

    v, _ = value_iteration(mdp)
    return StatePotential(list(map(float, v)), grzes_final_zero)
