"""Reward-matching transforms for intrinsic motivation, with tabular
environments, a Q-learning agent, an exhaustive verifier and an experiment
harness."""

from .errors import CapacityError, ConfigError, ContractViolation, MatchingError
from .mdp_core import EpisodicEnv, StepOutcome, Trajectory, discounted_return, rollout
from .shaping import (
    DelayMatching,
    GrmShaper,
    IdentityMatching,
    PbimMatching,
    grm_potential,
    grm_transform,
    f_from_potential,
    parse_matching,
    pbim_transform,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConfigError",
    "ContractViolation",
    "MatchingError",
    "EpisodicEnv",
    "StepOutcome",
    "Trajectory",
    "discounted_return",
    "rollout",
    "DelayMatching",
    "GrmShaper",
    "IdentityMatching",
    "PbimMatching",
    "grm_potential",
    "grm_transform",
    "f_from_potential",
    "parse_matching",
    "pbim_transform",
]
