"""Config-driven experiments, verification sweeps, plots and the CLI."""

from .config import ExperimentConfig, from_dict, load_config
from .plot import plot
from .runner import RunLog, run_experiment, train_replicate
from .verify import SweepReport, verify_sweep

__all__ = [
    "ExperimentConfig",
    "from_dict",
    "load_config",
    "plot",
    "RunLog",
    "run_experiment",
    "train_replicate",
    "SweepReport",
    "verify_sweep",
]
