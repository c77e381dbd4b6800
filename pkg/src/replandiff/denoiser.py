"""Noise-prediction network: a residual temporal MLP over H x D trajectories.

The input is lifted per row, ``h = ff(tau) @ W_in + b_in + pos``, where
``ff`` appends sin/cos features of every state value at ``fourier`` octaves
(so wall geometry is easy to express as a function of position) and
``pos`` is a learned per-row bias, so the network knows which rows are the
inpainted endpoints. Each of the ``depth`` blocks is then::

    u = layer_norm_lite(h) @ W + b           # per-timestep linear
    u = dilated depthwise conv (5 taps) of u  # banded mixing along H
    h = h + mish(u + proj(step_emb, cond))

The condition (goal and start state, with the same sin/cos features) enters
before the nonlinearity, so it can gate which features each block adds.

The 5-tap mixing is a per-channel banded-matrix product along H
(:func:`numkit.band_matmul`), which never materialises the H x H band.
Block ``l`` uses dilation ``2 ** (l % 4)`` so four blocks see +-30 rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .numkit import Tensor

KERNEL = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DenoiserConfig:
    horizon: int = 32
    state_dim: int = 4
    width: int = 128
    depth: int = 4
    embed_dim: int = 32
    fourier: int = 5  # octaves of sin/cos input features per state dim

    @property
    def in_dim(self):
        return self.state_dim * (1 + 2 * self.fourier)

    def validate(self):
        if self.horizon < 4 or self.state_dim < 2 or self.depth < 2:
            raise ConfigError(f"need H>=4, D>=2, L>=2: {self}")
        if self.width < self.embed_dim:
            raise ConfigError(f"width {self.width} < embed_dim {self.embed_dim}")
        if not 0 <= self.fourier <= 8:
            raise ConfigError(f"fourier must be in [0, 8], got {self.fourier}")
        if self.embed_dim % 2:
            raise ConfigError(f"embed_dim must be even, got {self.embed_dim}")
        return self


def param_shapes(cfg):
    D, W, E = cfg.state_dim, cfg.width, cfg.embed_dim
    shapes = {
        "time.w1": (E, W),
        "time.b1": (W,),
        "time.w2": (W, E),
        "time.b2": (E,),
        "goal.w": (cfg.in_dim, E),
        "goal.b": (E,),
        "start.w": (cfg.in_dim, E),
        "in.w": (cfg.in_dim, W),
        "in.b": (W,),
        "pos": (cfg.horizon, W),
    }
    for l in range(cfg.depth):
        shapes[f"block{l}.ln"] = (W,)
        shapes[f"block{l}.w"] = (W, W)
        shapes[f"block{l}.b"] = (W,)
        shapes[f"block{l}.conv"] = (KERNEL, W)
        shapes[f"block{l}.emb.w"] = (2 * E, W)
        shapes[f"block{l}.emb.b"] = (W,)
    shapes["out.ln"] = (W,)
    shapes["out.w"] = (W, D)
    shapes["out.b"] = (D,)
    return shapes


def param_count(cfg):
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    tensors: dict  # name -> Tensor, in param_shapes order

    def __getitem__(self, name):
        return self.tensors[name]

    def list(self):
        return list(self.tensors.values())

    def names(self):
        return list(self.tensors)

    def copy(self):
        return DenoiserParams(self.config, {k: Tensor(v.data, requires_grad=v.requires_grad, name=k) for k, v in self.tensors.items()})


def init_params(cfg, seed):
    """Fan-in scaled uniform weights, zero biases, unit norm gains; deterministic per seed."""
    cfg.validate()
    rng = nk.make_rng(seed, 0xD0)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("b") or leaf == "pos":
            arr = np.zeros(shape)
        elif leaf == "ln":
            arr = np.ones(shape)
        else:
            fan_in = shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(arr.astype(np.float32), requires_grad=True, name=name)
    return DenoiserParams(cfg, tensors)


def timestep_embed(params, steps):
    """Learned step embedding (B, E): sinusoid -> linear -> mish -> linear."""
    E = params.config.embed_dim
    raw = nk.sinusoid(steps, E)
    h = nk.mish(nk.add(nk.matmul(raw, params["time.w1"]), params["time.b1"]))
    return nk.add(nk.matmul(h, params["time.w2"]), params["time.b2"])


def goal_embed(params, goal, start=None):
    """Condition vector (B, E) for normalised goal states (B, D), plus the start state when given.

    Both are expanded with the same sin/cos features as the trajectory input.
    """
    octaves = params.config.fourier
    goal = fourier_features(np.atleast_2d(nk.as_tensor(goal).data), octaves)
    out = nk.add(nk.matmul(Tensor(goal), params["goal.w"]), params["goal.b"])
    if start is not None:
        start = fourier_features(np.atleast_2d(nk.as_tensor(start).data), octaves)
        out = nk.add(out, nk.matmul(Tensor(start), params["start.w"]))
    return out


def fourier_features(tau, octaves):
    """[tau, sin(pi 2^j tau), cos(pi 2^j tau)] for j < octaves, along the last axis."""
    if octaves == 0:
        return tau
    freqs = np.pi * 2.0 ** np.arange(octaves)
    ang = (tau[..., :, None] * freqs).reshape(tau.shape[:-1] + (-1,))
    return np.concatenate([tau, np.sin(ang), np.cos(ang)], axis=-1)


def dilation(block):
    """Band spacing of block ``block``: 1, 2, 4, 8, 1, ... so four blocks see +-30 rows."""
    return 2 ** (block % 4)


def predict_noise(params, tau, steps, cond):
    """Predicted noise with the shape of ``tau``.

    ``tau`` is (H, D) or (B, H, D); ``steps`` a scalar or (B,) ints; ``cond``
    (E,) or (B, E), zeros meaning unconditional. Returns a Tensor.
    """
    cfg = params.config
    tau = nk.as_tensor(tau)
    single = tau.data.ndim == 2
    if single:
        tau = nk.reshape(tau, (1,) + tau.shape)
    B, H, D = tau.shape
    if (H, D) != (cfg.horizon, cfg.state_dim):
        raise nk.DimensionError(f"trajectory shape {(H, D)} != configured {(cfg.horizon, cfg.state_dim)}")
    cond = nk.as_tensor(cond)
    if cond.data.ndim == 1:
        cond = nk.reshape(cond, (1, cond.shape[0]))
    if cond.shape[-1] != cfg.embed_dim:
        raise nk.DimensionError(f"cond length {cond.shape[-1]} != embed_dim {cfg.embed_dim}")
    if cond.shape[0] != B:
        if cond.shape[0] != 1:
            raise nk.DimensionError(f"cond batch {cond.shape[0]} != trajectory batch {B}")
        cond = nk.concat([cond] * B, axis=0)
    steps = np.broadcast_to(np.asarray(steps), (B,))

    emb = nk.concat([timestep_embed(params, steps), cond], axis=-1)
    x = Tensor(fourier_features(tau.data, cfg.fourier)) if cfg.fourier else tau
    h = nk.add(nk.add(nk.matmul(x, params["in.w"]), params["in.b"]), params["pos"])
    W = cfg.width
    for l in range(cfg.depth):
        p = f"block{l}."
        u = nk.layer_norm_lite(h, params[p + "ln"])
        u = nk.add(nk.matmul(u, params[p + "w"]), params[p + "b"])
        u = nk.band_matmul(u, params[p + "conv"], dilation(l))
        e = nk.add(nk.matmul(emb, params[p + "emb.w"]), params[p + "emb.b"])
        h = nk.add(h, nk.mish(nk.add(u, nk.reshape(e, (B, 1, W)))))
    out = nk.add(nk.matmul(nk.layer_norm_lite(h, params["out.ln"]), params["out.w"]), params["out.b"])
    if single:
        out = nk.reshape(out, (H, D))
    return out
