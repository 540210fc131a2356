"""Batch policy-preservation checks over seeded random MDPs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..envs import RandomMdpConfig, TabularMdp, random_episodic_mdp
from ..errors import CapacityError, ConfigError
from ..intrinsic import CountBonus
from ..oracle import policy_preservation_check, procrastination_fixture
from ..shaping import parse_matching

DEFAULT_SPECS = ("identity", "pbim", "delay-1", "delay-10")
FAMILIES = ("random", "procrastination")


def _random_instance(rng: np.random.Generator) -> TabularMdp:
    """Small random MDP that fits the enumeration caps.

    Deterministic instances get 2 actions and horizon up to 4 (at most 15
    decision nodes); stochastic ones stay at horizon 2 or 3 and fall back to
    shorter horizons when the tree is too large.
    """
    deterministic = bool(rng.random() < 0.5)
    seed = int(rng.integers(2**31))
    num_states = int(rng.integers(2, 6))
    num_terminal = int(rng.integers(0, 2)) if num_states > 2 else 0
    gamma = float(rng.uniform(0.5, 1.0))
    horizon = int(rng.integers(2, 5)) if deterministic else int(rng.integers(2, 4))
    while True:
        cfg = RandomMdpConfig(num_states=num_states, num_actions=2, horizon=horizon,
                              deterministic=deterministic, seed=seed, num_terminal=num_terminal,
                              gamma=gamma)
        try:
            return random_episodic_mdp(cfg)
        except CapacityError:
            if horizon == 1:
                raise
            horizon -= 1


@dataclass
class SweepReport:
    count: int
    seed: int
    family: str
    specs: tuple[str, ...]
    alpha: float
    instances: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    def tally(self) -> dict[str, dict[str, int]]:
        out = {s: {"pass": 0, "fail": 0, "skipped": 0} for s in self.specs}
        for inst in self.instances:
            for spec, res in inst["results"].items():
                out[spec][res["status"]] += 1
        return out

    @property
    def unexpected_failures(self) -> int:
        """Failures under a real matching function; raw IM is allowed to fail."""
        return sum(
            1
            for inst in self.instances
            for spec, res in inst["results"].items()
            if res["status"] == "fail" and parse_matching(spec) is not None
        )

    @property
    def passed(self) -> bool:
        return self.unexpected_failures == 0

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "seed": self.seed,
            "family": self.family,
            "specs": list(self.specs),
            "alpha": self.alpha,
            "tally": self.tally(),
            "unexpected_failures": self.unexpected_failures,
            "passed": self.passed,
            "instances": self.instances,
        }


def verify_sweep(
    count: int,
    seed: int = 0,
    specs: Sequence[str] = DEFAULT_SPECS,
    family: str = "random",
    alpha: float = 1.0,
    tol: float = 1e-9,
) -> SweepReport:
    """Check optimal-policy preservation on ``count`` seeded instances per spec.

    ``family="procrastination"`` draws stall-loop fixtures with random
    (alpha, gamma) instead and uses the fixture's own alpha for the bonus.
    Capacity problems are recorded per instance and never abort the sweep.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}")
    matchings = {s: parse_matching(s) for s in specs}
    report = SweepReport(count, seed, family, tuple(specs), alpha)
    started = time.perf_counter()
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        entry: dict = {"instance": i, "results": {}}
        try:
            if family == "random":
                mdp, im_alpha = _random_instance(rng), alpha
            else:
                im_alpha = float(rng.uniform(0.05, 2.0))
                gamma = float(rng.uniform(0.8, 0.999))
                mdp = procrastination_fixture(im_alpha, gamma, int(rng.integers(3, 6)))
                entry["alpha"] = im_alpha
        except (CapacityError, ConfigError) as exc:
            entry["error"] = str(exc)
            entry["results"] = {s: {"status": "skipped"} for s in specs}
            report.instances.append(entry)
            continue
        entry.update(num_states=mdp.num_states, horizon=mdp.horizon, gamma=mdp.gamma)
        for spec, matching in matchings.items():
            try:
                res = policy_preservation_check(mdp, CountBonus(im_alpha), matching, tol)
            except CapacityError as exc:
                entry["results"][spec] = {"status": "skipped", "error": str(exc)}
                continue
            result = {"status": "pass" if res.passed else "fail"}
            if not res.passed:
                result["counterexamples"] = res.counterexamples(limit=2)
            entry["results"][spec] = result
        report.instances.append(entry)
    report.elapsed = time.perf_counter() - started
    return report
