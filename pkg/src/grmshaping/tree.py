"""Exhaustive expansion of a small TabularMdp into its history tree."""

from __future__ import annotations

from dataclasses import dataclass

from .envs import NODE_CAP, TabularMdp
from .errors import CapacityError

History = tuple[int, ...]  # (s0, a0, s1, a1, ..., s_t)


@dataclass(frozen=True)
class Path:
    """One complete episode through the tree, whatever the policy."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    trans_probs: tuple[float, ...]  # P(s_{k+1} | s_k, a_k)
    nodes: tuple[int, ...]  # decision-node id at each step
    initial_prob: float
    terminated: bool

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def prob(self) -> float:
        """Probability of the outcome sequence given that its actions are taken."""
        p = self.initial_prob
        for q in self.trans_probs:
            p *= q
        return p

    def history(self, t: int) -> History:
        out: list[int] = []
        for k in range(t):
            out += [self.states[k], self.actions[k]]
        out.append(self.states[t])
        return tuple(out)


@dataclass(frozen=True)
class HistoryTree:
    nodes: tuple[History, ...]
    paths: tuple[Path, ...]
    num_actions: int

    @property
    def node_index(self) -> dict[History, int]:
        return {h: i for i, h in enumerate(self.nodes)}


def expand(mdp: TabularMdp, node_cap: int = NODE_CAP) -> HistoryTree:
    """Enumerate every decision node and every complete path.

    A decision node is a history ending in a non-terminal state before the
    horizon. Raises :class:`CapacityError` above ``node_cap`` nodes.
    """
    nodes: list[History] = []
    paths: list[Path] = []

    def visit(hist: History, states, actions, rewards, probs, node_ids, p0):
        s = states[-1]
        t = len(actions)
        if s in mdp.terminal or t >= mdp.horizon:
            paths.append(Path(tuple(states), tuple(actions), tuple(rewards), tuple(probs),
                              tuple(node_ids), p0, s in mdp.terminal))
            return
        node = len(nodes)
        nodes.append(hist)
        if len(nodes) > node_cap:
            raise CapacityError(f"history tree exceeds {node_cap} decision nodes")
        for a in range(mdp.num_actions):
            for s2, p, r in mdp.successors(s, a):
                visit(hist + (a, s2), states + [s2], actions + [a], rewards + [r],
                      probs + [p], node_ids + [node], p0)

    for s0, p0 in enumerate(mdp.initial):
        if p0 > 0:
            visit((s0,), [s0], [], [], [], [], float(p0))
    return HistoryTree(tuple(nodes), tuple(paths), mdp.num_actions)
