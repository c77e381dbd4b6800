"""``RDMCKPT1`` checkpoint files.

Layout (little-endian)::

    magic        8 bytes  b"RDMCKPT1"
    version      u32      = 1
    meta_len     u32
    meta         JSON, UTF-8, sorted keys: {"model": {...}, "train": {...}}
    betas        f64[N + 1]            schedule with the index-0 sentinel
    stats_min    f32[D]
    stats_max    f32[D]
    n_tensors    u32
    tensors      n x (name_len u16, name, ndim u8, dims u32[ndim], f32 data)
    footer       optional: b"RDMCAL01", mu f64, sigma f64, M u32,
                 draws u32, n_steps u32, steps u32[n_steps]

Loading validates every tensor shape against the embedded model config and
checks the stored schedule against the one rebuilt from it.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..denoiser import DenoiserConfig, DenoiserParams, param_shapes
from ..diffusion import DiffusionModel, make_schedule
from ..likelihood import Calibration, ProbeConfig
from ..numkit import Tensor

MAGIC = b"RDMCKPT1"
VERSION = 1
CAL_MAGIC = b"RDMCAL01"
MODEL_KEYS = ("horizon", "state_dim", "width", "depth", "embed_dim", "fourier", "n_diffusion", "schedule", "stride")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: DiffusionModel
    train: dict = field(default_factory=dict)
    calibration: Calibration | None = None
    probe: ProbeConfig | None = None


def model_meta(model):
    c = model.config
    return {
        "horizon": c.horizon,
        "state_dim": c.state_dim,
        "width": c.width,
        "depth": c.depth,
        "embed_dim": c.embed_dim,
        "fourier": c.fourier,
        "n_diffusion": model.N,
        "schedule": model.schedule.kind,
        "stride": model.stride,
    }


def _meta_bytes(ckpt):
    meta = {"model": model_meta(ckpt.model), "train": ckpt.train}
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def to_bytes(ckpt):
    m = ckpt.model
    meta = _meta_bytes(ckpt)
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta]
    parts.append(np.asarray(m.schedule.betas, dtype="<f8").tobytes())
    parts.append(np.asarray(m.stats_min, dtype="<f4").tobytes())
    parts.append(np.asarray(m.stats_max, dtype="<f4").tobytes())
    tensors = m.params.tensors
    parts.append(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.shape))
        parts.append(np.asarray(t.data, dtype="<f4").tobytes())
    if ckpt.calibration is not None:
        cal, probe = ckpt.calibration, ckpt.probe or ProbeConfig()
        parts.append(CAL_MAGIC + struct.pack("<ddIII", cal.mu, cal.sigma, cal.M, probe.draws, len(probe.steps)))
        parts.append(struct.pack(f"<{len(probe.steps)}I", *probe.steps))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def from_bytes(buf):
    if buf[:8] != MAGIC:
        raise CheckpointError("not an RDMCKPT1 file (bad magic)")
    r = _Reader(buf)
    r.take(8)
    version, meta_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(meta_len))
        mm = meta["model"]
        cfg = DenoiserConfig(mm["horizon"], mm["state_dim"], mm["width"], mm["depth"], mm["embed_dim"],
                             mm.get("fourier", 0)).validate()
        sched = make_schedule(mm["n_diffusion"], mm["schedule"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"bad checkpoint metadata: {e}") from None
    betas = r.array("<f8", sched.N + 1)
    if not np.array_equal(betas, sched.betas):
        raise CheckpointError("stored schedule does not match its declared kind and N")
    D = cfg.state_dim
    lo = r.array("<f4", D).astype(np.float32)
    hi = r.array("<f4", D).astype(np.float32)
    (n,) = r.unpack("<I")
    expected = param_shapes(cfg)
    tensors = {}
    for _ in range(n):
        (nl,) = r.unpack("<H")
        name = r.take(nl).decode()
        (nd,) = r.unpack("<B")
        shape = r.unpack(f"<{nd}I")
        if expected.get(name) != tuple(shape):
            raise CheckpointError(f"tensor {name!r} has shape {shape}, config implies {expected.get(name)}")
        data = r.array("<f4", int(np.prod(shape))).reshape(shape).astype(np.float32)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    if list(tensors) != list(expected):
        raise CheckpointError("checkpoint tensors do not match the configured parameter set")
    model = DiffusionModel(sched, DenoiserParams(cfg, tensors), cfg, lo, hi, stride=int(mm.get("stride", 1)))
    cal = probe = None
    if r.pos < len(buf):
        if r.take(8) != CAL_MAGIC:
            raise CheckpointError("unrecognised trailing data in checkpoint")
        mu, sigma, M, draws, ns = r.unpack("<ddIII")
        steps = r.unpack(f"<{ns}I")
        cal, probe = Calibration(mu, sigma, M), ProbeConfig(tuple(steps), draws)
        if r.pos != len(buf):
            raise CheckpointError("trailing bytes after calibration footer")
    return Checkpoint(model, meta.get("train", {}), cal, probe)


def save_checkpoint(ckpt, path):
    """Atomic write: a failed save never clobbers the previous file."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(to_bytes(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())
