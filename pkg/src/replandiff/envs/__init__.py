"""Continuous point-mass maze: worlds, dynamics, expert and datasets."""

from .dataset import (
    Dataset,
    DatasetFormatError,
    Episode,
    dataset_from_bytes,
    dataset_to_bytes,
    generate_dataset,
    load_dataset,
    sample_start_goal,
    save_dataset,
)
from .dynamics import EnvState, StepResult, clip_action, collision_free, inverse_dynamics, step
from .expert import NoPathError, WaypointTracker, expert_path, rollout_expert
from .world import MazeWorld, WorldFormatError, load_world, parse_world

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "EnvState",
    "Episode",
    "MazeWorld",
    "NoPathError",
    "StepResult",
    "WaypointTracker",
    "WorldFormatError",
    "clip_action",
    "collision_free",
    "dataset_from_bytes",
    "dataset_to_bytes",
    "expert_path",
    "generate_dataset",
    "inverse_dynamics",
    "load_world",
    "parse_world",
    "rollout_expert",
    "sample_start_goal",
    "save_dataset",
    "step",
]
