"""Ablation sweeps: repeat evaluation over one config axis."""

from __future__ import annotations

import dataclasses
import os

from .checkpoint import load_checkpoint
from .config import ConfigError
from .evaluate import evaluate, make_setup, summarize
from .formats import fmt, write_csv

SWEEP_COLUMNS = [
    "axis", "value", "variant", "episodes", "success_rate", "success_se", "normalized_return",
    "normalized_return_se", "mean_steps_to_goal", "total_diffusion_steps", "mean_diffusion_steps",
    "n_scratch", "n_future", "n_prev", "collisions",
]


def _pair(value, axis):
    if isinstance(value, str) and ":" in value:
        value = [float(v) for v in value.split(":")]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{axis} sweep values must be pairs, got {value!r}")
    return value


def apply_axis(cfg, axis, value):
    """Config for one sweep point.

    epsilon: the world's epsilon. thresholds: (theta_future, theta_scratch).
    intervals: (dd_interval_scratch, dd_interval_future). replan_steps:
    n_future (and n_prev) diffusion steps.
    """
    if axis == "epsilon":
        new = dataclasses.replace(cfg, epsilon=float(value))
    elif axis == "thresholds":
        f, s = _pair(value, axis)
        new = dataclasses.replace(cfg, theta_future=float(f), theta_scratch=float(s))
    elif axis == "intervals":
        i_s, i_f = _pair(value, axis)
        new = dataclasses.replace(cfg, dd_interval_scratch=int(i_s), dd_interval_future=int(i_f))
    elif axis == "replan_steps":
        new = dataclasses.replace(cfg, n_future=int(value), n_prev=int(value))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return new.validate()


def value_label(value):
    if isinstance(value, (list, tuple)):
        return ":".join(fmt(v) for v in value)
    return fmt(value)


def sweep_rows(cfg, ckpt, axis=None, values=None):
    axis = axis or cfg.sweep_axis
    values = cfg.sweep_values if values is None else values
    if not values:
        raise ConfigError("sweep axis has no values")
    rows = []
    for value in values:
        point = apply_axis(cfg, axis, value)
        setup = make_setup(point, ckpt)
        results = evaluate(point, setup)
        for variant, res in results.items():
            m = summarize(res)
            p = m["success_rate"]
            se = (p * (1 - p) / m["episodes"]) ** 0.5
            rows.append([
                axis, value_label(value), variant, m["episodes"], p, se, m["normalized_return"],
                m["normalized_return_se"], "" if m["mean_steps_to_goal"] is None else m["mean_steps_to_goal"],
                m["total_diffusion_steps"], m["mean_diffusion_steps"], m["replans"]["scratch"],
                m["replans"]["future"], m["replans"]["prev"], m["collisions"],
            ])
    return rows


def cmd_sweep(cfg, axis=None):
    if cfg.seed is None:
        raise ConfigError("sweep needs an explicit --seed")
    ckpt = load_checkpoint(cfg.checkpoint_path())
    axis = axis or cfg.sweep_axis
    rows = sweep_rows(cfg, ckpt, axis)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"sweep_{axis}.csv")
    write_csv(path, SWEEP_COLUMNS, rows)
    print(f"{len(rows)} sweep rows -> {path}")
    return path
