"""Flat JSON run configuration with documented defaults.

Every key has a default; unknown keys are rejected. ``None`` for the
budget and interval keys means "derive from the model": ``n_scratch = N``,
``n_prev = n_future``, ``dd_interval_scratch = H``, ``dd_interval_future = H / 8``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

POLICIES = ("rdm", "diffuser", "dd", "sdm", "rpdm")
SWEEP_AXES = ("epsilon", "thresholds", "intervals", "replan_steps")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # world and data
    world: str = "maze8"
    out_dir: str = "runs/default"
    dataset: str = ""  # default: <out_dir>/data.rdm
    checkpoint: str = ""  # default: <out_dir>/model.ckpt
    n_episodes: int = 2000
    data_seed: int = 0
    jitter: float = 0.05
    # model
    horizon: int = 32
    state_dim: int = 4
    width: int = 128
    depth: int = 4
    embed_dim: int = 32
    fourier: int = 5
    n_diffusion: int = 128
    schedule: str = "cosine"
    stride: int = 4
    # training
    batch_size: int = 64
    train_steps: int = 20000
    lr: float = 1e-3
    train_seed: int = 0
    cond_drop: float = 0.1
    pin_prob: float = 1.0
    log_every: int = 100
    ckpt_every: int = 1000
    # likelihood probe
    probe_steps: list = field(default_factory=lambda: [3, 5, 8])
    probe_draws: int = 4
    calib_samples: int = 64
    calib_seed: int = 0
    theta_future: float = 0.7
    theta_scratch: float = 0.5
    # replanning
    n_scratch: int | None = None
    n_future: int = 40
    n_prev: int | None = None
    dd_interval_scratch: int | None = None
    dd_interval_future: int | None = None
    sdm_delta: float = 0.1
    cooldown: int = 2
    track_gain: float = 0.5
    # evaluation
    policies: list = field(default_factory=lambda: ["rdm", "diffuser"])
    episodes: int = 50
    seed: int | None = None
    n_seeds: int = 1
    epsilon: float | None = None  # None: the world file's value
    interventions: bool = True
    start_goal: str = "world"  # "world": the file's S/G cells; "random": random free cells
    equal_budget: bool = False
    budget: int | None = None  # per-episode diffusion steps under equal_budget
    log_episodes: int = 5  # per-step logs written for the first few episodes per variant
    # sweeps
    sweep_axis: str = "epsilon"
    sweep_values: list = field(default_factory=lambda: [0.0, 0.01, 0.03, 0.05, 0.1])

    def dataset_path(self):
        return self.dataset or f"{self.out_dir}/data.rdm"

    def checkpoint_path(self):
        return self.checkpoint or f"{self.out_dir}/model.ckpt"

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_episodes >= 1, "n_episodes must be >= 1")
        need(self.n_diffusion >= 2, "n_diffusion must be >= 2")
        need(self.schedule in ("linear", "cosine"), f"unknown schedule {self.schedule!r}")
        need(self.stride >= 1, "stride must be >= 1")
        need(self.batch_size >= 1 and self.train_steps >= 0, "bad training sizes")
        need(self.lr > 0, "lr must be positive")
        need(0.0 <= self.cond_drop < 1.0, "cond_drop must be in [0, 1)")
        need(0.0 <= self.pin_prob <= 1.0, "pin_prob must be in [0, 1]")
        need(len(self.probe_steps) > 0 and self.probe_draws >= 1, "probe needs steps and draws >= 1")
        need(all(1 <= i <= self.n_diffusion for i in self.probe_steps), "probe steps outside [1, N]")
        need(self.calib_samples >= 16, "calib_samples must be >= 16")
        need(0.0 <= self.theta_scratch <= self.theta_future <= 1.0, "need 0 <= theta_scratch <= theta_future <= 1")
        N = self.n_diffusion
        need(1 <= self.n_future <= N, "n_future must be in [1, N]")
        need(self.n_scratch is None or 1 <= self.n_scratch <= N, "n_scratch must be in [1, N]")
        need(self.n_prev is None or 1 <= self.n_prev <= N, "n_prev must be in [1, N]")
        i_s, i_f = self.intervals()
        need(i_s > i_f >= 1, "need dd_interval_scratch > dd_interval_future >= 1")
        need(self.sdm_delta > 0, "sdm_delta must be positive")
        need(self.cooldown >= 0, "cooldown must be >= 0")
        need(0.0 <= self.track_gain <= 1.0, "track_gain must be in [0, 1]")
        bad = [p for p in self.policies if p not in POLICIES]
        need(not bad and self.policies, f"unknown policies {bad}; choose from {POLICIES}")
        need(self.episodes >= 1 and self.n_seeds >= 1, "episodes and n_seeds must be >= 1")
        need(self.epsilon is None or 0.0 <= self.epsilon <= 1.0, "epsilon must be in [0, 1]")
        if self.equal_budget:
            need(self.budget is not None, "equal_budget needs a per-episode budget")
            need(self.budget >= self.scratch_steps(), "budget smaller than one initial plan")
        need(self.start_goal in ("world", "random"), f"start_goal must be 'world' or 'random', got {self.start_goal!r}")
        need(self.sweep_axis in SWEEP_AXES, f"unknown sweep axis {self.sweep_axis!r}")
        return self

    def scratch_steps(self):
        return self.n_scratch if self.n_scratch is not None else self.n_diffusion

    def prev_steps(self):
        return self.n_prev if self.n_prev is not None else self.n_future

    def intervals(self):
        i_s = self.dd_interval_scratch if self.dd_interval_scratch is not None else self.horizon
        i_f = self.dd_interval_future if self.dd_interval_future is not None else max(1, self.horizon // 8)
        return i_s, i_f

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _coerce(name, value, default):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(default, list) and isinstance(value, str):
        return json.loads(value) if value.startswith("[") else [_num(v) for v in value.split(",") if v]
    if isinstance(default, (int, float)) and isinstance(value, str):
        return _num(value)
    return value


def _num(s):
    s = str(s).strip()
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s


_OPTIONAL_INT = {"n_scratch", "n_prev", "dd_interval_scratch", "dd_interval_future", "seed", "budget"}


def make_config(data=None, overrides=None):
    """Build a validated RunConfig from a dict plus CLI-style overrides (strings allowed)."""
    known = {f.name: f for f in fields(RunConfig)}
    base = RunConfig()
    merged = {}
    for src in (data or {}), (overrides or {}):
        for k, v in src.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            if k in _OPTIONAL_INT and isinstance(v, str):
                v = None if v.lower() in ("", "none", "null") else int(v)
            elif k == "epsilon" and isinstance(v, str):
                v = None if v.lower() in ("", "none", "null") else float(v)
            else:
                v = _coerce(k, v, getattr(base, k))
            merged[k] = v
    try:
        cfg = RunConfig(**merged)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    for k in ("n_episodes", "data_seed", "horizon", "state_dim", "width", "depth", "embed_dim", "fourier", "n_diffusion", "stride"):
        if not isinstance(getattr(cfg, k), int) or isinstance(getattr(cfg, k), bool):
            raise ConfigError(f"{k} must be an integer")
    return cfg.validate()


def load_config(path, overrides=None):
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return make_config(data, overrides)
