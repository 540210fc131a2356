"""TOML experiment configuration.

Sections and keys::

    name = "cliff-rnd-pbim"
    replicates = 10
    output_dir = "runs/cliff"
    eval_episodes = 10
    workers = 0        # 0: one process per replicate, capped at the CPU count

    [env]      name = "cliff_walk" | "long_cliff_walk" | "key_door", plus env params
    [agent]    lr, episodes, eps_start, eps_decay, eps_min, seed
    [im]       kind = "none" | "count" | "rnd", alpha, rnd_lr, rnd_scale,
               rnd_hidden, rnd_features, rnd_init_range, normalize
    [shaping]  kind = "none" | "raw" | "pbim" | "grm_delay" | "classic_pbrs",
               delay, normalized, grzes_final_zero, potential = "zero" | "vstar"

``agent.seed`` is the base seed; replicate ``i`` uses ``seed + i``. The
``GRM_OUT`` environment variable overrides ``output_dir``.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError

ENV_NAMES = ("cliff_walk", "long_cliff_walk", "key_door")
IM_KINDS = ("none", "count", "rnd")
SHAPING_KINDS = ("none", "raw", "pbim", "grm_delay", "classic_pbrs")
POTENTIALS = ("zero", "vstar")


@dataclass(frozen=True)
class EnvSection:
    name: str = "cliff_walk"
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AgentSection:
    lr: float = 0.1
    episodes: int = 5000
    eps_start: float = 1.0
    eps_decay: float = 5e-3
    eps_min: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ImSection:
    kind: str = "none"
    alpha: float = 1.0
    rnd_lr: float = 1e-6
    rnd_scale: float = 1000.0
    rnd_hidden: int = 16
    rnd_features: int = 8
    rnd_init_range: float = 0.5
    normalize: bool = False


@dataclass(frozen=True)
class ShapingSection:
    kind: str = "none"
    delay: int = 1
    normalized: bool = False
    grzes_final_zero: bool = True
    potential: str = "zero"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    env: EnvSection = EnvSection()
    agent: AgentSection = AgentSection()
    im: ImSection = ImSection()
    shaping: ShapingSection = ShapingSection()
    replicates: int = 10
    output_dir: Optional[str] = None
    eval_episodes: int = 10
    workers: int = 0

    @property
    def seeds(self) -> list[int]:
        return [self.agent.seed + i for i in range(self.replicates)]

    @property
    def normalize(self) -> bool:
        return self.im.normalize or self.shaping.normalized

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["env"] = {"name": self.env.name, **dict(self.env.params)}
        return out

    def replace(self, key: str, value: Any) -> "ExperimentConfig":
        """Copy with one dotted key (``agent.lr``, ``replicates``...) changed."""
        data = self.to_dict()
        section, _, leaf = key.rpartition(".")
        if section and section not in ("env", "agent", "im", "shaping"):
            raise ConfigError(f"unknown section in key {key!r}")
        target = data[section] if section else data
        target[leaf] = value
        return from_dict(data)


_SECTIONS = {"agent": AgentSection, "im": ImSection, "shaping": ShapingSection}
_TOP = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"env", "agent", "im", "shaping"}


def _coerce(cls, raw: Mapping[str, Any], prefix: str, bad: list[str]):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            bad.append(f"{prefix}.{key}: unknown key")
            continue
        default = fields[key].default
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(default, int):
                if isinstance(value, bool) or float(value) != int(value):
                    raise TypeError
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            elif isinstance(default, str):
                value = str(value)
        except (TypeError, ValueError):
            bad.append(f"{prefix}.{key}: expected {type(default).__name__}, got {value!r}")
            continue
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build and validate a config; every offending key is listed in the error."""
    bad: list[str] = []
    data = dict(data)
    env_raw = dict(data.pop("env", {}))
    env = EnvSection(str(env_raw.pop("name", "cliff_walk")), env_raw)
    sections = {name: _coerce(cls, data.pop(name, {}), name, bad) for name, cls in _SECTIONS.items()}
    top = {}
    for key, value in data.items():
        if key not in _TOP:
            bad.append(f"{key}: unknown key")
        else:
            top[key] = value
    try:
        cfg = ExperimentConfig(env=env, **sections, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    bad += _validate(cfg)
    if bad:
        raise ConfigError("invalid config: " + "; ".join(bad))
    return cfg


def _validate(cfg: ExperimentConfig) -> list[str]:
    bad = []
    if cfg.env.name not in ENV_NAMES:
        bad.append(f"env.name: {cfg.env.name!r} not in {ENV_NAMES}")
    a = cfg.agent
    if not 0 < a.lr <= 1:
        bad.append("agent.lr: must lie in (0, 1]")
    if a.episodes < 1:
        bad.append("agent.episodes: must be >= 1")
    if not 0 <= a.eps_min <= a.eps_start <= 1:
        bad.append("agent.eps_min/eps_start: need 0 <= eps_min <= eps_start <= 1")
    if a.eps_decay < 0:
        bad.append("agent.eps_decay: must be >= 0")
    if cfg.im.kind not in IM_KINDS:
        bad.append(f"im.kind: {cfg.im.kind!r} not in {IM_KINDS}")
    if cfg.im.alpha < 0:
        bad.append("im.alpha: must be >= 0")
    if cfg.im.rnd_lr < 0 or cfg.im.rnd_scale < 0:
        bad.append("im.rnd_lr/rnd_scale: must be >= 0")
    s = cfg.shaping
    if s.kind not in SHAPING_KINDS:
        bad.append(f"shaping.kind: {s.kind!r} not in {SHAPING_KINDS}")
    if s.delay < 0:
        bad.append("shaping.delay: must be >= 0")
    if s.potential not in POTENTIALS:
        bad.append(f"shaping.potential: {s.potential!r} not in {POTENTIALS}")
    if s.kind in ("raw", "pbim", "grm_delay") and cfg.im.kind == "none":
        bad.append(f"shaping.kind: {s.kind!r} needs an intrinsic module (im.kind)")
    if cfg.replicates < 1:
        bad.append("replicates: must be >= 1")
    if cfg.eval_episodes < 1:
        bad.append("eval_episodes: must be >= 1")
    if cfg.workers < 0:
        bad.append("workers: must be >= 0 (0 = auto)")
    return bad


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = from_dict(data)
    return apply_env_override(cfg)


def apply_env_override(cfg: ExperimentConfig) -> ExperimentConfig:
    out = os.environ.get("GRM_OUT")
    return dataclasses.replace(cfg, output_dir=out) if out else cfg


def parse_value(text: str) -> Any:
    """Interpret a sweep value the way TOML would, falling back to a string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text
