"""Denoiser training loop and the ``train`` command."""

from __future__ import annotations

import logging
import math
import os
import time

import numpy as np

from .. import numkit as nk
from ..denoiser import DenoiserConfig, init_params
from ..diffusion import DiffusionModel, make_schedule, normalize, training_loss
from ..envs.dataset import load_dataset
from .checkpoint import Checkpoint, save_checkpoint
from .formats import fmt

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class WindowSampler:
    """Uniformly sampled strided H-windows, normalised, as one (B, H, D) array."""

    def __init__(self, dataset, horizon, stride):
        self.H, self.stride = horizon, stride
        lengths = np.array([len(ep.states) for ep in dataset.episodes])
        self.base = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        self.last = self.base + lengths - 1
        allstates = np.concatenate([ep.states for ep in dataset.episodes])
        self.states = normalize(allstates, dataset.stats_min, dataset.stats_max)
        self.index = dataset.windows(horizon, stride)
        if len(self.index) == 0:
            raise ValueError("dataset has no training windows")

    def __len__(self):
        return len(self.index)

    def rows(self, picks):
        e, off = self.index[picks, 0], self.index[picks, 1]
        r = self.base[e, None] + off[:, None] + self.stride * np.arange(self.H)[None, :]
        return np.minimum(r, self.last[e, None])

    def sample(self, rng, batch):
        picks = rng.integers(0, len(self.index), size=batch)
        return self.states[self.rows(picks)]


def new_model(cfg, dataset):
    dcfg = DenoiserConfig(cfg.horizon, cfg.state_dim, cfg.width, cfg.depth, cfg.embed_dim, cfg.fourier).validate()
    if dataset.state_dim != cfg.state_dim:
        raise ValueError(f"dataset state_dim {dataset.state_dim} != configured {cfg.state_dim}")
    return DiffusionModel(
        make_schedule(cfg.n_diffusion, cfg.schedule),
        init_params(dcfg, cfg.train_seed),
        dcfg,
        dataset.stats_min.copy(),
        dataset.stats_max.copy(),
        stride=cfg.stride,
    )


def train_model(model, dataset, steps, batch_size=64, lr=1e-3, seed=0, cond_drop=0.1, pin_prob=1.0,
                log_every=100, on_log=None, ckpt_every=0, on_ckpt=None, history=None):
    """Adam on the noise-prediction loss; returns the list of (step, mean loss) log rows.

    Rows are appended to ``history`` when given, so they survive a failure.
    ``on_ckpt(step, loss)`` is called every ``ckpt_every`` steps with the
    parameters in a known-good state. A non-finite loss or gradient raises
    :class:`TrainingDiverged` before any parameter is touched.
    """
    sampler = WindowSampler(dataset, model.horizon, model.stride)
    rng = nk.make_rng(seed, 1)
    state = nk.AdamState(lr=lr)
    params = model.params.list()
    rows = history if history is not None else []
    acc, n_acc, last = 0.0, 0, float("nan")
    for step in range(1, steps + 1):
        tau0 = sampler.sample(rng, batch_size)
        try:
            with nk.Tape() as tape:
                loss = training_loss(model, tau0, rng, cond_drop=cond_drop, pin_prob=pin_prob)
            grads = tape.backward(loss, params)
            value = loss.item()
            if not math.isfinite(value):
                raise nk.NonFiniteError("loss is not finite")
            nk.adam_step(params, grads, state)
        except nk.NonFiniteError as e:
            raise TrainingDiverged(f"step {step}: {e}") from e
        last = value
        acc += value
        n_acc += 1
        if step % log_every == 0 or step == steps:
            rows.append((step, acc / n_acc))
            if on_log:
                on_log(step, acc / n_acc)
            acc, n_acc = 0.0, 0
        if on_ckpt and ckpt_every and step % ckpt_every == 0:
            on_ckpt(step, last)
    return rows


def write_loss_csv(rows, path):
    with open(path, "w") as f:
        f.write("step,loss\n")
        for step, loss in rows:
            f.write(f"{step},{fmt(loss)}\n")


def cmd_train(cfg):
    ds = load_dataset(cfg.dataset_path())
    model = new_model(cfg, ds)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = cfg.checkpoint_path()
    info = {"dataset_seed": ds.seed, "episodes": len(ds.episodes), "seed": cfg.train_seed,
            "batch_size": cfg.batch_size, "lr": cfg.lr, "cond_drop": cfg.cond_drop, "pin_prob": cfg.pin_prob, "steps": 0, "loss": None}
    t0 = time.perf_counter()

    def on_log(step, loss):
        log.info("step %d loss %.5f (%.0fs)", step, loss, time.perf_counter() - t0)

    def on_ckpt(step, loss):
        info.update(steps=step, loss=float(np.float32(loss)))
        save_checkpoint(Checkpoint(model, dict(info)), ckpt_path)

    rows = []
    try:
        train_model(model, ds, cfg.train_steps, cfg.batch_size, cfg.lr, cfg.train_seed, cfg.cond_drop, cfg.pin_prob,
                    cfg.log_every, on_log, cfg.ckpt_every, on_ckpt, history=rows)
    finally:
        write_loss_csv(rows, os.path.join(cfg.out_dir, "loss.csv"))
    info.update(steps=cfg.train_steps, loss=float(np.float32(rows[-1][1])) if rows else None)
    save_checkpoint(Checkpoint(model, info), ckpt_path)
    print(f"trained {cfg.train_steps} steps, final loss {fmt(rows[-1][1]) if rows else 'n/a'} -> {ckpt_path}")
    return ckpt_path
