"""Maze world description and its text file format.

A world file is a grid followed by an optional ``---`` line and ``key = value``
settings::

    ########
    #S..#..#
    #.#.D1.#      <- rows holding multi-character tokens are whitespace separated
    ...
    ---
    dt = 0.1
    door.1 = 40:closed, 120:open

Grid tokens: ``#`` wall, ``.`` free, ``S``/``G`` default start/goal (free),
``D<n>`` door cell with id ``n``. Row 0 is the top row; world coordinates
are ``x = (col + u) * cell_size`` and ``y = (row + v) * cell_size``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np


class WorldFormatError(ValueError):
    pass


_FLOAT_KEYS = ("dt", "damping", "max_accel", "max_speed", "cell_size", "goal_radius", "epsilon")
_INT_KEYS = ("t_max",)


@dataclass(frozen=True, eq=False)
class MazeWorld:
    walls: np.ndarray  # bool, rows x cols
    door_cells: dict = field(default_factory=dict)  # id -> tuple of (row, col)
    door_schedule: dict = field(default_factory=dict)  # id -> tuple of (step, is_open)
    start_cell: tuple | None = None
    goal_cell: tuple | None = None
    cell_size: float = 1.0
    goal_radius: float = 0.4
    epsilon: float = 0.0
    t_max: int = 300
    dt: float = 0.1
    max_accel: float = 1.0
    max_speed: float = 1.5
    damping: float = 0.02
    name: str = "world"

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=bool)
        object.__setattr__(self, "walls", walls)
        if walls.ndim != 2 or min(walls.shape) < 3:
            raise WorldFormatError(f"grid must be at least 3x3, got {walls.shape}")
        if not (walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all()):
            raise WorldFormatError("grid border must be fully walled")
        if not 0.0 <= self.epsilon <= 1.0:
            raise WorldFormatError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        for cell in (self.start_cell, self.goal_cell):
            if cell is not None and not self.is_passable(cell, t=0):
                raise WorldFormatError(f"start/goal cell {cell} is not passable at t=0")

    # -- cells ---------------------------------------------------------------
    @property
    def shape(self):
        return self.walls.shape

    @cached_property
    def door_ids_by_cell(self):
        return {cell: did for did, cells in self.door_cells.items() for cell in cells}

    @cached_property
    def free_cells(self):
        """Passable non-door cells in (row, col) order; start/goal candidates."""
        doors = self.door_ids_by_cell
        rows, cols = np.nonzero(~self.walls)
        return [(int(r), int(c)) for r, c in zip(rows, cols) if (int(r), int(c)) not in doors]

    def cell_center(self, cell):
        r, c = cell
        return np.array([(c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size])

    def cell_of(self, xy):
        return int(np.floor(xy[1] / self.cell_size)), int(np.floor(xy[0] / self.cell_size))

    def extent(self):
        """World-space (width, height)."""
        return self.walls.shape[1] * self.cell_size, self.walls.shape[0] * self.cell_size

    # -- doors ---------------------------------------------------------------
    def door_open(self, door_id, t):
        state = True
        for step, is_open in self.door_schedule.get(door_id, ()):
            if step <= t:
                state = is_open
            else:
                break
        return state

    def closed_doors(self, t):
        return frozenset(d for d in sorted(self.door_cells) if not self.door_open(d, t))

    @cached_property
    def door_events(self):
        """Steps at which some door takes a scheduled state."""
        return frozenset(s for sched in self.door_schedule.values() for s, _ in sched)

    def blocked_mask(self, t=0, closed=None):
        """uint8 occupancy (walls plus doors closed at step ``t``)."""
        if closed is None:
            closed = self.closed_doors(t)
        return self._mask_for(frozenset(closed))

    def _mask_for(self, closed):
        cache = self.__dict__.setdefault("_mask_cache", {})
        mask = cache.get(closed)
        if mask is None:
            mask = self.walls.astype(np.uint8)
            for did in closed:
                for r, c in self.door_cells[did]:
                    mask[r, c] = 1
            mask.setflags(write=False)
            cache[closed] = mask
        return mask

    def is_passable(self, cell, t=0):
        r, c = cell
        if not (0 <= r < self.walls.shape[0] and 0 <= c < self.walls.shape[1]):
            return False
        return not self.blocked_mask(t)[r, c]

    def with_overrides(self, **kw):
        return dataclasses.replace(self, **kw)


def _parse_schedule(text, key):
    events = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        m = re.fullmatch(r"(\d+)\s*:\s*(open|closed)", item)
        if m is None:
            raise WorldFormatError(f"bad door schedule entry {item!r} for {key}")
        events.append((int(m.group(1)), m.group(2) == "open"))
    events.sort(key=lambda e: e[0])
    return tuple(events)


def _parse_cell(text, key):
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise WorldFormatError(f"{key} must be 'row,col', got {text!r}") from exc
    return r, c


def parse_world(text, name="world"):
    lines = [ln.rstrip() for ln in text.splitlines()]
    grid_lines, kv_lines, in_kv = [], [], False
    for ln in lines:
        if ln.strip() == "---":
            in_kv = True
            continue
        if not ln.strip() or (in_kv and ln.lstrip().startswith("#")):
            continue
        (kv_lines if in_kv else grid_lines).append(ln)
    if not grid_lines:
        raise WorldFormatError("world file has no grid")

    rows = [ln.split() if any(ch.isspace() for ch in ln.strip()) else list(ln.strip()) for ln in grid_lines]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise WorldFormatError("grid rows have unequal length")

    walls = np.zeros((len(rows), width), dtype=bool)
    door_cells: dict[int, list] = {}
    start = goal = None
    for r, row in enumerate(rows):
        for c, tok in enumerate(row):
            if tok == "#":
                walls[r, c] = True
            elif tok == ".":
                pass
            elif tok == "S":
                start = (r, c)
            elif tok == "G":
                goal = (r, c)
            elif re.fullmatch(r"D\d+", tok):
                door_cells.setdefault(int(tok[1:]), []).append((r, c))
            else:
                raise WorldFormatError(f"unknown grid token {tok!r} at row {r}, col {c}")

    kw = {}
    schedule = {}
    for ln in kv_lines:
        if "=" not in ln:
            raise WorldFormatError(f"expected 'key = value', got {ln!r}")
        key, value = (s.strip() for s in ln.split("=", 1))
        if key in _FLOAT_KEYS:
            kw[key] = float(value)
        elif key in _INT_KEYS:
            kw[key] = int(value)
        elif key.startswith("door."):
            did = int(key[5:])
            if did not in door_cells:
                raise WorldFormatError(f"schedule for unknown door {did}")
            schedule[did] = _parse_schedule(value, key)
        elif key == "start":
            start = _parse_cell(value, key)
        elif key == "goal":
            goal = _parse_cell(value, key)
        elif key == "name":
            name = value
        else:
            raise WorldFormatError(f"unknown world key {key!r}")

    return MazeWorld(
        walls=walls,
        door_cells={k: tuple(v) for k, v in sorted(door_cells.items())},
        door_schedule=schedule,
        start_cell=start,
        goal_cell=goal,
        name=name,
        **kw,
    )


def load_world(path):
    """Load a world file; bare names resolve to the bundled fixtures (``maze8``, ``maze12``)."""
    p = Path(path)
    if not p.is_file():
        bundled = resources.files("replandiff") / "worlds" / f"{path}.txt"
        if not bundled.is_file():
            raise FileNotFoundError(f"no world file {path!r}")
        return parse_world(bundled.read_text(), name=str(path))
    return parse_world(p.read_text(), name=p.stem)
