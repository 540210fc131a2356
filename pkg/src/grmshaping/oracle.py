"""Brute-force checks on tiny MDPs: every history-dependent deterministic policy
is enumerated and valued exactly, with and without shaped intrinsic rewards.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .envs import NODE_CAP, POLICY_CAP, TabularMdp
from .errors import CapacityError, ConfigError, ContractViolation
from .intrinsic import IntrinsicModule
from .mdp_core import EpisodeContext, StepOutcome, discount_power
from .shaping import MatchingFunction, grm_transform
from .tree import History, HistoryTree, Path, expand


@dataclass(frozen=True)
class HistoryPolicy:
    """Deterministic policy over decision nodes of one :class:`HistoryTree`."""

    ident: int
    actions: tuple[int, ...]  # indexed by node id
    nodes: tuple[History, ...] = field(repr=False, compare=False)

    def decision_table(self) -> dict[History, int]:
        return dict(zip(self.nodes, self.actions))

    def __call__(self, history: History) -> int:
        return self.actions[self.nodes.index(history)]


def _check_caps(tree: HistoryTree, policy_cap: int) -> int:
    count = tree.num_actions ** len(tree.nodes)
    if count > policy_cap:
        raise CapacityError(f"{count} policies over {len(tree.nodes)} nodes exceeds cap {policy_cap}")
    return count


def policy_matrix(tree: HistoryTree, policy_cap: int = POLICY_CAP) -> np.ndarray:
    """All policies as a (num_policies, num_nodes) action array, in product order."""
    _check_caps(tree, policy_cap)
    k = len(tree.nodes)
    if k == 0:
        return np.zeros((1, 0), dtype=np.int8)
    grids = np.indices((tree.num_actions,) * k, dtype=np.int8)
    return grids.reshape(k, -1).T


def enumerate_policies(mdp: TabularMdp, node_cap: int = NODE_CAP, policy_cap: int = POLICY_CAP) -> list[HistoryPolicy]:
    tree = expand(mdp, node_cap)
    table = policy_matrix(tree, policy_cap)
    return [HistoryPolicy(i, tuple(int(a) for a in row), tree.nodes) for i, row in enumerate(table)]


def _intrinsic_stream(path: Path, im: IntrinsicModule) -> list[float]:
    module = copy.deepcopy(im)
    module.start_episode(path.states[0])
    states = [path.states[0]]
    actions: list[int] = []
    out = []
    n = path.length
    for t in range(n):
        actions.append(path.actions[t])
        states.append(path.states[t + 1])
        step = StepOutcome(path.states[t], path.actions[t], path.states[t + 1], path.rewards[t],
                           path.terminated and t == n - 1, not path.terminated and t == n - 1, t)
        try:
            out.append(float(module.observe(step, EpisodeContext(tuple(states), tuple(actions), t))))
        except IndexError as exc:
            raise ContractViolation(f"intrinsic module looked beyond step {t}: {exc}") from None
    return out


@dataclass(frozen=True)
class PathReturns:
    raw: np.ndarray
    shaped: np.ndarray
    prob: np.ndarray


def path_returns(
    mdp: TabularMdp,
    tree: HistoryTree,
    im: Optional[IntrinsicModule] = None,
    matching: Optional[MatchingFunction] = None,
) -> PathReturns:
    """Discounted raw and shaped returns of every path.

    The shaped return adds the intrinsic stream, matched by ``matching`` if
    given, else unmatched.
    """
    g = mdp.gamma
    raw, shaped, prob = [], [], []
    for path in tree.paths:
        disc = [discount_power(g, t) for t in range(path.length)]
        r = sum(d * x for d, x in zip(disc, path.rewards))
        bonus = 0.0
        if im is not None and path.length:
            f = _intrinsic_stream(path, im)
            if matching is not None:
                f = grm_transform(f, g, matching)
            bonus = sum(d * x for d, x in zip(disc, f))
        raw.append(r)
        shaped.append(r + bonus)
        prob.append(path.prob)
    return PathReturns(np.array(raw), np.array(shaped), np.array(prob))


def _reach_mask(tree: HistoryTree, table: np.ndarray) -> np.ndarray:
    """mask[p, k]: policy p takes every action along path k."""
    mask = np.ones((table.shape[0], len(tree.paths)), dtype=bool)
    for k, path in enumerate(tree.paths):
        for node, a in zip(path.nodes, path.actions):
            mask[:, k] &= table[:, node] == a
    return mask


def exact_return(
    mdp: TabularMdp,
    policy: HistoryPolicy,
    im: Optional[IntrinsicModule] = None,
    matching: Optional[MatchingFunction] = None,
    node_cap: int = NODE_CAP,
) -> tuple[float, float]:
    """Exact expected (raw, shaped) discounted return of one history policy."""
    tree = expand(mdp, node_cap)
    if tree.nodes != policy.nodes:
        raise ConfigError("policy was enumerated on a different MDP")
    returns = path_returns(mdp, tree, im, matching)
    mask = _reach_mask(tree, np.array([policy.actions], dtype=np.int8).reshape(1, -1))[0]
    weights = returns.prob * mask
    return float(weights @ returns.raw), float(weights @ returns.shaped)


@dataclass
class PolicySetReport:
    values_raw: np.ndarray
    values_shaped: np.ndarray
    optimal_raw: frozenset[int]
    optimal_shaped: frozenset[int]
    tol: float
    nodes: tuple[History, ...] = ()
    table: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal_value(self) -> float:
        return float(self.values_raw.max())

    @property
    def optimal_value_shaped(self) -> float:
        return float(self.values_shaped.max())

    @property
    def passed(self) -> bool:
        return self.optimal_raw == self.optimal_shaped

    def counterexamples(self, limit: int = 5) -> list[dict]:
        """Policies optimal under exactly one of the two reward functions."""
        out = []
        for ident in sorted(self.optimal_raw ^ self.optimal_shaped)[:limit]:
            entry = {
                "policy": ident,
                "optimal_under": "shaped" if ident in self.optimal_shaped else "raw",
                "raw_value": float(self.values_raw[ident]),
                "shaped_value": float(self.values_shaped[ident]),
            }
            if self.table is not None:
                entry["decisions"] = {
                    "-".join(map(str, h)): int(a) for h, a in zip(self.nodes, self.table[ident])
                }
            out.append(entry)
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "num_policies": int(self.values_raw.size),
            "optimal_value": self.optimal_value,
            "optimal_value_shaped": self.optimal_value_shaped,
            "optimal_raw": sorted(self.optimal_raw),
            "optimal_shaped": sorted(self.optimal_shaped),
            "values_raw": self.values_raw.tolist(),
            "values_shaped": self.values_shaped.tolist(),
            "counterexamples": self.counterexamples(),
        }


def policy_preservation_check(
    mdp: TabularMdp,
    im: Optional[IntrinsicModule],
    matching: Optional[MatchingFunction],
    tol: float = 1e-9,
    node_cap: int = NODE_CAP,
    policy_cap: int = POLICY_CAP,
) -> PolicySetReport:
    """Compare the sets of optimal history policies with and without shaping.

    ``matching=None`` with an ``im`` means the raw, unmatched intrinsic reward.
    """
    tree = expand(mdp, node_cap)
    table = policy_matrix(tree, policy_cap)
    returns = path_returns(mdp, tree, im, matching)
    mask = _reach_mask(tree, table)
    v_raw = mask @ (returns.prob * returns.raw)
    v_shaped = mask @ (returns.prob * returns.shaped)
    opt_raw = frozenset(np.flatnonzero(v_raw >= v_raw.max() - tol).tolist())
    opt_shaped = frozenset(np.flatnonzero(v_shaped >= v_shaped.max() - tol).tolist())
    return PolicySetReport(v_raw, v_shaped, opt_raw, opt_shaped, tol, tree.nodes, table)


def procrastination_check(alpha: float, gamma: float, n: int, t: int) -> bool:
    """True iff stalling ``t`` steps on a tile seen ``n`` times beats moving on."""
    if n < 1 or t < 1:
        raise ValueError("n and t must be >= 1")
    gain = sum(alpha * gamma**k / (n + k + 1) for k in range(t))
    return 1.0 - gamma**t < gain


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, full: bool = False, stationary: bool = False):
    """Optimal values by backward induction over the horizon.

    Returns ``(V, Q)`` for t = 0, or the per-timestep tables ``V[t, s]`` and
    ``Q[t, s, a]`` when ``full``. ``stationary`` instead iterates the
    time-independent Bellman operator until the update is below ``tol``
    (needs gamma < 1).
    """
    P, R = mdp.transitions, mdp.rewards
    live = np.ones(mdp.num_states)
    live[list(mdp.terminal)] = 0.0
    expected_r = (P * R).sum(axis=2)

    def backup(v_next):
        q = expected_r + mdp.gamma * P @ (live * v_next)
        q[list(mdp.terminal)] = 0.0
        return q

    if stationary:
        if mdp.gamma >= 1:
            raise ConfigError("stationary value iteration needs gamma < 1")
        v = np.zeros(mdp.num_states)
        while True:
            q = backup(v)
            v_new = q.max(axis=1)
            if np.max(np.abs(v_new - v)) < tol:
                return v_new, q
            v = v_new

    H = mdp.horizon
    V = np.zeros((H + 1, mdp.num_states))
    Q = np.zeros((H, mdp.num_states, mdp.num_actions))
    for t in range(H - 1, -1, -1):
        Q[t] = backup(V[t + 1])
        V[t] = Q[t].max(axis=1)
    if full:
        return V, Q
    return V[0], Q[0]


STALL, ADVANCE = 1, 0


def procrastination_fixture(alpha: float, gamma: float, horizon: int = 4) -> TabularMdp:
    """start -> hall -> goal corridor with a stay-put action everywhere.

    Reaching the goal pays 1, everything else 0. With a visit-count bonus the
    agent can farm intrinsic reward by stalling at the start.
    """
    if horizon < 3:
        raise ConfigError("horizon must leave room to stall and still reach the goal")
    if not any(procrastination_check(alpha, gamma, 1, t) for t in range(1, horizon - 1)):
        raise ConfigError(f"alpha={alpha}, gamma={gamma}: stalling never pays, no fixture")
    start, hall, goal = 0, 1, 2
    P = np.zeros((3, 2, 3))
    R = np.zeros((3, 2, 3))
    P[start, ADVANCE, hall] = 1.0
    P[start, STALL, start] = 1.0
    P[hall, ADVANCE, goal] = 1.0
    R[hall, ADVANCE, goal] = 1.0
    P[hall, STALL, hall] = 1.0
    P[goal, :, goal] = 1.0
    return TabularMdp(P, R, frozenset({goal}), np.array([1.0, 0.0, 0.0]), gamma, horizon)


def decode_policy(report: PolicySetReport, ident: int) -> dict[History, int]:
    return dict(zip(report.nodes, (int(a) for a in report.table[ident])))


def bfs_shortest_path(next_state: Sequence[Sequence[int]], start: int, goals: set[int], blocked: set[int]) -> int:
    """Fewest actions from ``start`` to any goal avoiding ``blocked`` states."""
    from collections import deque

    dist = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if s in goals:
            return dist[s]
        for s2 in next_state[s]:
            if s2 not in dist and s2 not in blocked:
                dist[s2] = dist[s] + 1
                queue.append(s2)
    raise ValueError("goal unreachable")
