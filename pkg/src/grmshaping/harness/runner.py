"""Replicated Q-learning runs with optional intrinsic reward and shaping."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..agents import EpsilonSchedule, QLearningConfig, QTable, greedy_policy, q_update, select_action
from ..envs import CliffWalkConfig, CliffWalkEnv, KeyDoorConfig, KeyDoorEnv, cliff_walk, key_door, long_cliff_walk
from ..errors import ConfigError
from ..intrinsic import CountBonus, IntrinsicModule, RndLite, RunningMean
from ..mdp_core import EpisodicEnv, rollout
from ..shaping import DelayMatching, GrmShaper, PbimMatching, PotentialBonus, StatePotential, vstar_potential
from .config import ExperimentConfig

log = logging.getLogger(__name__)

EVAL_ROW = "eval"
CSV_COLUMNS = ("episode", "steps", "extrinsic_return", "intrinsic_raw_sum", "shaped_sum", "epsilon")


def make_env(cfg: ExperimentConfig) -> EpisodicEnv:
    params = dict(cfg.env.params)
    try:
        if cfg.env.name == "cliff_walk":
            return cliff_walk(CliffWalkConfig(**params))
        if cfg.env.name == "long_cliff_walk":
            return long_cliff_walk(**params)
        if cfg.env.name == "key_door":
            for k in ("start", "key", "goal"):
                if k in params:
                    params[k] = tuple(params[k])
            return key_door(KeyDoorConfig(**params))
    except TypeError as exc:
        raise ConfigError(f"env params: {exc}") from None
    raise ConfigError(f"unknown env {cfg.env.name!r}")


def make_intrinsic(cfg: ExperimentConfig, env: EpisodicEnv, seed: int) -> Optional[IntrinsicModule]:
    s = cfg.shaping
    if s.kind == "none":
        return None
    if s.kind == "classic_pbrs":
        if s.potential == "zero":
            pot = StatePotential([0.0] * env.num_states, s.grzes_final_zero)
        else:
            pot = vstar_potential(env.to_mdp(), s.grzes_final_zero)
        return PotentialBonus(pot, env.gamma)
    im = cfg.im
    if im.kind == "count":
        key = env.position_key if isinstance(env, KeyDoorEnv) else None
        return CountBonus(im.alpha, key)
    if im.kind == "rnd":
        return RndLite(env.num_states, im.rnd_hidden, im.rnd_features, im.rnd_lr, im.rnd_scale,
                       seed=seed, init_range=im.rnd_init_range)
    return None


def make_shaper(cfg: ExperimentConfig, gamma: float) -> Optional[GrmShaper]:
    kind = cfg.shaping.kind
    if kind == "pbim":
        return GrmShaper(PbimMatching(), gamma)
    if kind == "grm_delay":
        return GrmShaper(DelayMatching(cfg.shaping.delay), gamma)
    return None


@dataclass
class RunLog:
    seed: int
    rows: list[tuple] = field(default_factory=list)
    greedy_return: float = math.nan
    greedy_length: float = math.nan
    wall_clock: float = 0.0
    failed: bool = False
    error: str = ""
    q_values: Optional[list[list[float]]] = None
    policy: Optional[list[int]] = None

    def column(self, name: str) -> np.ndarray:
        i = CSV_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([row[0], row[1]] + [repr(float(x)) for x in row[2:]])
        if not self.failed and math.isfinite(self.greedy_return):
            # greedy evaluation: mean length in the steps column, epsilon 0
            w.writerow([EVAL_ROW, repr(float(self.greedy_length)), repr(float(self.greedy_return)), "", "", "0.0"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = -1) -> "RunLog":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        out = cls(seed)
        for r in reader:
            if not r:
                continue
            if r[0] == EVAL_ROW:
                out.greedy_length, out.greedy_return = float(r[1]), float(r[2])
            else:
                out.rows.append((int(r[0]), int(r[1]), *map(float, r[2:])))
        out.failed = math.isnan(out.greedy_return)
        return out


def greedy_evaluation(env: EpisodicEnv, table: QTable, episodes: int, rng) -> tuple[float, float]:
    """Mean undiscounted return and length with epsilon = 0."""
    returns, lengths = [], []
    for _ in range(episodes):
        tr = rollout(env, lambda s, r: select_action(table, s, 0.0, r), rng=rng)
        returns.append(sum(tr.extrinsic))
        lengths.append(tr.length)
    return float(np.mean(returns)), float(np.mean(lengths))


def train_replicate(cfg: ExperimentConfig, seed: int) -> RunLog:
    """One isolated training run followed by greedy evaluation.

    Numeric failures (non-finite rewards or Q values) mark the log failed
    instead of raising.
    """
    started = time.perf_counter()
    runlog = RunLog(seed)
    env = make_env(cfg)
    rng = np.random.default_rng(seed)
    qcfg = QLearningConfig(cfg.agent.lr, env.gamma, cfg.agent.episodes, seed)
    table = QTable(env.num_states, env.num_actions)
    schedule = EpsilonSchedule(cfg.agent.eps_start, cfg.agent.eps_decay, cfg.agent.eps_min)
    intrinsic = make_intrinsic(cfg, env, seed)
    shaper = make_shaper(cfg, env.gamma)
    use_bonus = cfg.shaping.kind != "none"
    normalizer = RunningMean() if (cfg.normalize and intrinsic is not None and cfg.shaping.kind != "classic_pbrs") else None

    shaped_sum = 0.0

    def on_step(outcome, bonus):
        nonlocal shaped_sum
        shaped_sum += bonus
        q_update(table, outcome, outcome.extrinsic_reward + (bonus if use_bonus else 0.0), qcfg)

    try:
        with np.errstate(over="raise", invalid="raise"):
            for episode in range(cfg.agent.episodes):
                eps = schedule(episode)
                shaped_sum = 0.0
                tr = rollout(env, lambda s, r: select_action(table, s, eps, r), intrinsic, shaper, rng,
                             normalizer=normalizer, on_step=on_step)
                raw_sum = sum(tr.intrinsic_raw) if tr.intrinsic_raw is not None else 0.0
                runlog.rows.append((episode, tr.length, float(sum(tr.extrinsic)), float(raw_sum),
                                    float(shaped_sum), float(eps)))
            if not all(math.isfinite(v) for row in table.rows for v in row):
                raise FloatingPointError("Q table contains non-finite values")
            runlog.greedy_return, runlog.greedy_length = greedy_evaluation(env, table, cfg.eval_episodes, rng)
    except FloatingPointError as exc:
        runlog.failed = True
        runlog.error = f"{type(exc).__name__}: {exc}"
        log.warning("run with seed %d failed: %s", seed, runlog.error)
    runlog.q_values = table.rows
    runlog.policy = greedy_policy(table)
    runlog.wall_clock = time.perf_counter() - started
    return runlog


def _stats(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "std": None}
    arr = np.array(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def summarize(cfg: ExperimentConfig, logs: list[RunLog]) -> dict:
    """Aggregate over completed runs; population standard deviation."""
    ok = [r for r in logs if not r.failed]
    return {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "replicates": len(logs),
        "failed": sum(r.failed for r in logs),
        "greedy_return": _stats([r.greedy_return for r in ok]),
        "greedy_length": _stats([r.greedy_length for r in ok]),
        "runs": [
            {
                "seed": r.seed,
                "status": "failed" if r.failed else "ok",
                "error": r.error,
                "greedy_return": None if r.failed else r.greedy_return,
                "greedy_length": None if r.failed else r.greedy_length,
                "final_training_return": r.rows[-1][2] if r.rows else None,
            }
            for r in logs
        ],
    }


def policy_dump(env: EpisodicEnv, log_: RunLog) -> dict:
    out = {"seed": log_.seed, "policy": log_.policy, "q_values": log_.q_values}
    if isinstance(env, CliffWalkEnv):
        out["grid"] = {
            "width": env.width,
            "height": env.height,
            "start": env.start_state,
            "goal": env.goal_state,
            "cliff": sorted(env.cliff_states),
        }
        out["render"] = env.render_policy(log_.policy).splitlines()
    return out


def write_outputs(cfg: ExperimentConfig, logs: list[RunLog], summary: dict, out_dir: Path) -> None:
    """Per-run CSV and policy dumps, summary JSON. Wall-clock timings go to
    ``timing.json`` so every other file is reproducible byte for byte."""
    out_dir.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg)
    for i, r in enumerate(logs):
        stem = f"run_{i:02d}_seed{r.seed}"
        (out_dir / f"{stem}.csv").write_text(r.to_csv())
        (out_dir / f"{stem}_policy.json").write_text(json.dumps(policy_dump(env, r), indent=1) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    timing = {"runs": [{"seed": r.seed, "wall_clock_s": r.wall_clock} for r in logs]}
    (out_dir / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")


@dataclass
class ExperimentResult:
    logs: list[RunLog]
    summary: dict
    out_dir: Optional[Path] = None

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.logs)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str | Path] = None) -> ExperimentResult:
    """Train every replicate, aggregate, and write files when a directory is known."""
    make_env(cfg)  # surface env parameter errors before any work
    seeds = cfg.seeds
    workers = cfg.workers or min(len(seeds), os.cpu_count() or 1)
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(train_replicate, [cfg] * len(seeds), seeds))
    else:
        logs = [train_replicate(cfg, s) for s in seeds]
    summary = summarize(cfg, logs)
    target = out_dir if out_dir is not None else cfg.output_dir
    path = Path(target) if target else None
    if path is not None:
        write_outputs(cfg, logs, summary, path)
    return ExperimentResult(logs, summary, path)
