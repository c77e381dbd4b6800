"""Experiment surface: config, checkpoints, training, evaluation, sweeps, renders and the CLI."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, make_config

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "RunConfig",
    "load_checkpoint",
    "load_config",
    "make_config",
    "save_checkpoint",
]
