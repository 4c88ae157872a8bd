from .config import ExperimentConfig, derive_seed, load_config
from .experiment import run_experiment
from .report import build_report

__all__ = [
    "ExperimentConfig",
    "derive_seed",
    "load_config",
    "run_experiment",
    "build_report",
]
