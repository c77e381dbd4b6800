"""Command-line entry point: ``replandiff <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from ..envs.dataset import DatasetFormatError, generate_dataset, save_dataset
from ..envs.expert import NoPathError
from ..envs.world import WorldFormatError, load_world
from ..likelihood import ProbeConfig, ProbeError, calibrate
from ..numkit.rng import make_rng
from ..replan import ReplanError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config, make_config
from .formats import fmt

log = logging.getLogger("replandiff")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# flags that map straight onto config keys
_FLAG_KEYS = {
    "world": "world", "out_dir": "out_dir", "dataset": "dataset", "checkpoint": "checkpoint",
    "episodes": "episodes", "steps": "train_steps", "n_seeds": "n_seeds", "epsilon": "epsilon",
}


def _build_config(args, extra=None):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v if isinstance(v, str) else str(v)
    overrides.update(extra or {})
    if args.config:
        return load_config(args.config, overrides)
    return make_config({}, overrides)


def cmd_gen_data(cfg):
    world = load_world(cfg.world)
    ds = generate_dataset(world, cfg.n_episodes, cfg.data_seed, cfg.jitter)
    path = cfg.dataset_path()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_dataset(ds, path)
    print(f"{len(ds.episodes)} episodes -> {path}")
    print("dim,min,max")
    for d in range(ds.state_dim):
        print(f"{d},{fmt(ds.stats_min[d])},{fmt(ds.stats_max[d])}")
    return path


def cmd_calibrate(cfg):
    path = cfg.checkpoint_path()
    ckpt = load_checkpoint(path)
    world = load_world(cfg.world).with_overrides(door_schedule={})
    probe = ProbeConfig(tuple(int(i) for i in cfg.probe_steps), cfg.probe_draws).validate(ckpt.model.schedule)
    rng = make_rng(cfg.calib_seed, 0xCA1)
    cal = calibrate(ckpt.model, world, cfg.calib_samples, rng, probe, train_loss=ckpt.train.get("loss"))
    ckpt.calibration, ckpt.probe = cal, probe
    save_checkpoint(ckpt, path)
    print(f"calibration mu={fmt(cal.mu)} sigma={fmt(cal.sigma)} M={cal.M} -> {path}")
    return cal


def _parser():
    p = argparse.ArgumentParser(prog="replandiff", description="Likelihood-triggered replanning with trajectory diffusion.")
    p.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--config", help="flat JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.add_argument("--world", help="world file or bundled name (maze8, maze12)")
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--dataset")
        sp.add_argument("--checkpoint")
        sp.add_argument("--seed", type=int, required=seed_required)
        return sp

    g = common(sub.add_parser("gen-data", help="generate an expert dataset (RDMDATA1)"))
    g.add_argument("--n-episodes", dest="n_episodes", type=int)
    common(sub.add_parser("train", help="train the denoiser; writes RDMCKPT1 and loss.csv")).add_argument(
        "--steps", type=int)
    common(sub.add_parser("calibrate", help="store KL calibration in the checkpoint footer"))
    e = common(sub.add_parser("eval", help="closed-loop evaluation"), seed_required=True)
    e.add_argument("--episodes", type=int)
    e.add_argument("--n-seeds", dest="n_seeds", type=int)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--policies", help="comma-separated: rdm,diffuser,dd,sdm,rpdm")
    s = common(sub.add_parser("sweep", help="repeat eval over one axis"), seed_required=True)
    s.add_argument("--axis", choices=["epsilon", "thresholds", "intervals", "replan_steps"])
    s.add_argument("--values", help="comma-separated values; pairs as a:b")
    s.add_argument("--episodes", type=int)
    s.add_argument("--n-seeds", dest="n_seeds", type=int)
    s.add_argument("--policies")
    r = sub.add_parser("render", help="SVG renders of a logged episode")
    r.add_argument("steps_csv", help="steps.csv written by eval")
    r.add_argument("--world", required=True)
    r.add_argument("--out-dir", dest="out_dir", default=".")
    r.add_argument("--variant")
    r.add_argument("--seed", type=int)
    r.add_argument("--episode", type=int)
    r.add_argument("--theta-future", type=float, default=0.7)
    r.add_argument("--theta-scratch", type=float, default=0.5)
    return p


def _sweep_values(text):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        vals.append([float(v) for v in tok.split(":")] if ":" in tok else float(tok))
    return vals


def run(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "render":
        from .render import cmd_render

        cmd_render(args.steps_csv, args.world, args.out_dir, args.variant, args.seed, args.episode,
                   args.theta_future, args.theta_scratch)
        return EXIT_OK

    extra = {}
    if args.seed is not None:
        key = {"gen-data": "data_seed", "train": "train_seed", "calibrate": "calib_seed"}.get(args.command, "seed")
        extra[key] = str(args.seed)
    if getattr(args, "n_episodes", None) is not None:
        extra["n_episodes"] = str(args.n_episodes)
    if getattr(args, "policies", None):
        extra["policies"] = args.policies
    if getattr(args, "axis", None):
        extra["sweep_axis"] = args.axis
    cfg = _build_config(args, extra)
    if getattr(args, "values", None):
        cfg = dataclasses.replace(cfg, sweep_values=_sweep_values(args.values)).validate()

    if args.command == "gen-data":
        cmd_gen_data(cfg)
    elif args.command == "train":
        from .train import cmd_train

        cmd_train(cfg)
    elif args.command == "calibrate":
        cmd_calibrate(cfg)
    elif args.command == "eval":
        from .evaluate import cmd_eval

        cmd_eval(cfg)
    elif args.command == "sweep":
        from .sweep import cmd_sweep

        cmd_sweep(cfg)
    return EXIT_OK


CONFIG_ERRORS = (ConfigError, WorldFormatError, ProbeError, ReplanError)
RUNTIME_ERRORS = (CheckpointError, DatasetFormatError, NoPathError, OSError, RuntimeError, ValueError,
                  ArithmeticError)


def main(argv=None):
    try:
        return run(argv)
    except SystemExit as e:  # argparse usage errors
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    except CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
