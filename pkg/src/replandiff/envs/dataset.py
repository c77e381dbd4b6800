"""Expert demonstration datasets and the ``RDMDATA1`` file format.

Layout (little-endian)::

    magic       8 bytes  b"RDMDATA1"
    version     u32      = 1
    state_dim   u32
    action_dim  u32
    n_episodes  u32
    seed        u64
    jitter      f32
    stats_min   f32[state_dim]
    stats_max   f32[state_dim]
    episodes    n_episodes x (n_states u32, start_row u32, start_col u32,
                              goal_row u32, goal_col u32, offset u64)
    payload     per episode: states f32[n_states, state_dim] then
                actions f32[n_states - 1, action_dim]

``offset`` is the byte offset of the episode's payload from the start of the
payload section.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from ..numkit.rng import make_rng
from .dynamics import collision_free
from .expert import rollout_expert

log = logging.getLogger(__name__)

MAGIC = b"RDMDATA1"
VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass
class Episode:
    states: np.ndarray  # (n, D) float32
    actions: np.ndarray  # (n - 1, 2) float32
    start_cell: tuple
    goal_cell: tuple


@dataclass
class Dataset:
    episodes: list
    stats_min: np.ndarray
    stats_max: np.ndarray
    seed: int = 0
    jitter: float = 0.0
    _windows: dict = field(default_factory=dict, repr=False)

    @property
    def state_dim(self):
        return int(self.stats_min.shape[0])

    def windows(self, horizon, stride):
        """(episode, offset) pairs whose strided H-window reaches the episode end."""
        key = (horizon, stride)
        if key not in self._windows:
            span = (horizon - 1) * stride
            idx = [
                (e, off)
                for e, ep in enumerate(self.episodes)
                for off in range(max(0, len(ep.states) - 1 - span), len(ep.states) - 1)
            ]
            self._windows[key] = np.array(idx, dtype=np.int64).reshape(-1, 2)
        return self._windows[key]

    def window(self, e, offset, horizon, stride):
        states = self.episodes[e].states
        rows = np.minimum(offset + stride * np.arange(horizon), len(states) - 1)
        return states[rows]


def compute_stats(episodes):
    allstates = np.concatenate([ep.states for ep in episodes], axis=0).astype(np.float32)
    return allstates.min(axis=0), allstates.max(axis=0)


def sample_start_goal(world, rng, min_cells=1):
    """Random distinct free start/goal cells; the start position is jittered within its cell."""
    from .expert import expert_path

    cells = world.free_cells
    while True:
        i, j = rng.choice(len(cells), size=2, replace=False)
        s, g = cells[int(i)], cells[int(j)]
        if min_cells > 1 and len(expert_path(world, s, g)) - 1 < min_cells:
            continue
        xy = world.cell_center(s) + rng.uniform(-0.25, 0.25, size=2) * world.cell_size
        return s, g, xy


def generate_dataset(world, n_episodes, seed, jitter=0.05):
    """Roll the expert out between random cells with all doors open and epsilon = 0."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    world = world.with_overrides(door_schedule={}, epsilon=0.0)
    rng = make_rng(seed, 0)
    episodes, attempts = [], 0
    while len(episodes) < n_episodes:
        attempts += 1
        if attempts > 10 * n_episodes:
            raise RuntimeError(f"expert failed too often ({attempts} attempts for {len(episodes)} episodes)")
        s, g, xy = sample_start_goal(world, rng)
        states, actions, reached, collided = rollout_expert(world, xy, g, rng=rng, jitter=jitter)
        goal_xy = world.cell_center(g)
        ok_end = float(np.hypot(*(states[-1, :2] - goal_xy))) <= world.goal_radius
        if reached is None or collided or not ok_end or not collision_free(world, states)[0]:
            continue
        episodes.append(Episode(states.astype(np.float32), actions.astype(np.float32), s, g))
    lo, hi = compute_stats(episodes)
    log.info("generated %d episodes in %d attempts", len(episodes), attempts)
    return Dataset(episodes, lo, hi, seed=int(seed), jitter=float(jitter))


_HDR = struct.Struct("<8sIIIIQf")
_EP = struct.Struct("<IIIIIQ")


def dataset_to_bytes(ds):
    D = ds.state_dim
    A = ds.episodes[0].actions.shape[1] if ds.episodes else 2
    parts = [
        _HDR.pack(MAGIC, VERSION, D, A, len(ds.episodes), ds.seed, ds.jitter),
        ds.stats_min.astype("<f4").tobytes(),
        ds.stats_max.astype("<f4").tobytes(),
    ]
    payload, offset = [], 0
    for ep in ds.episodes:
        parts.append(_EP.pack(len(ep.states), *ep.start_cell, *ep.goal_cell, offset))
        blob = ep.states.astype("<f4").tobytes() + ep.actions.astype("<f4").tobytes()
        payload.append(blob)
        offset += len(blob)
    return b"".join(parts + payload)


def dataset_from_bytes(buf):
    if len(buf) < _HDR.size or buf[:8] != MAGIC:
        raise DatasetFormatError("not an RDMDATA1 file (bad magic)")
    magic, version, D, A, n, seed, jitter = _HDR.unpack_from(buf, 0)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    pos = _HDR.size
    lo = np.frombuffer(buf, "<f4", D, pos).astype(np.float32)
    pos += 4 * D
    hi = np.frombuffer(buf, "<f4", D, pos).astype(np.float32)
    pos += 4 * D
    table = [_EP.unpack_from(buf, pos + k * _EP.size) for k in range(n)]
    base = pos + n * _EP.size
    episodes = []
    for n_states, sr, sc, gr, gc, off in table:
        p = base + off
        states = np.frombuffer(buf, "<f4", n_states * D, p).reshape(n_states, D).astype(np.float32)
        p += 4 * n_states * D
        actions = np.frombuffer(buf, "<f4", (n_states - 1) * A, p).reshape(n_states - 1, A).astype(np.float32)
        episodes.append(Episode(states, actions, (sr, sc), (gr, gc)))
    return Dataset(episodes, lo, hi, seed=seed, jitter=float(np.float32(jitter)))


def save_dataset(ds, path):
    with open(path, "wb") as f:
        f.write(dataset_to_bytes(ds))


def load_dataset(path):
    with open(path, "rb") as f:
        return dataset_from_bytes(f.read())
