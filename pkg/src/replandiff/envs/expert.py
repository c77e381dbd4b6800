"""A* over the cell grid and a waypoint-tracking controller used as the demonstrator."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .dynamics import EnvState, clip_action, step


class NoPathError(RuntimeError):
    pass


_MOVES = ((-1, 0), (0, -1), (0, 1), (1, 0))


def expert_path(world, start_cell, goal_cell, t=0):
    """Shortest 4-connected cell path (inclusive of both ends) with unit costs.

    Heap entries are ``(f, row, col)`` so equal-cost frontiers expand in
    (row, col) lexicographic order.
    """
    start_cell, goal_cell = tuple(start_cell), tuple(goal_cell)
    for cell in (start_cell, goal_cell):
        if not world.is_passable(cell, t):
            raise NoPathError(f"cell {cell} is not passable")
    mask = world.blocked_mask(t)
    gr, gc = goal_cell

    def h(r, c):
        return abs(r - gr) + abs(c - gc)

    g = {start_cell: 0}
    parent = {start_cell: None}
    heap = [(h(*start_cell), start_cell[0], start_cell[1])]
    closed = set()
    while heap:
        _, r, c = heapq.heappop(heap)
        if (r, c) in closed:
            continue
        if (r, c) == goal_cell:
            path = [goal_cell]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add((r, c))
        for dr, dc in _MOVES:
            nr, nc = r + dr, c + dc
            if mask[nr, nc] or (nr, nc) in closed:
                continue
            ng = g[(r, c)] + 1
            if ng < g.get((nr, nc), 1 << 30):
                g[(nr, nc)] = ng
                parent[(nr, nc)] = (r, c)
                heapq.heappush(heap, (ng + h(nr, nc), nr, nc))
    raise NoPathError(f"no path from {start_cell} to {goal_cell}")


def _simplify(points):
    out = [points[0]]
    for i in range(1, len(points) - 1):
        d0 = points[i] - out[-1]
        d1 = points[i + 1] - points[i]
        if abs(d0[0] * d1[1] - d0[1] * d1[0]) > 1e-9:
            out.append(points[i])
    out.append(points[-1])
    return out


@dataclass
class ExpertGains:
    lookahead: float = 0.5
    turn_speed: float = 0.5
    brake_frac: float = 0.6  # fraction of max accel assumed available for braking
    settle_tol: float = 0.05


class WaypointTracker:
    """Pure-pursuit tracker with a braking speed profile before turns and the goal."""

    def __init__(self, world, start_xy, cells, gains=None):
        self.world = world
        self.gains = gains or ExpertGains()
        pts = [np.asarray(start_xy, dtype=np.float64)] + [world.cell_center(c) for c in cells[1:]]
        if len(pts) == 1:
            pts.append(world.cell_center(cells[0]))
        self.pts = _simplify(pts)
        seg = np.diff(np.array(self.pts), axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.arc = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.goal = self.pts[-1]
        self._seg = 0

    def _project(self, p):
        best = (np.inf, self._seg, 0.0)
        for i in range(self._seg, min(self._seg + 3, len(self.seg_len))):
            a, L = self.pts[i], self.seg_len[i]
            if L == 0:
                u = 0.0
            else:
                u = float(np.clip(np.dot(p - a, self.pts[i + 1] - a) / L**2, 0.0, 1.0))
            q = a + u * (self.pts[i + 1] - a)
            d = float(np.hypot(*(p - q)))
            if d < best[0] - 1e-12:
                best = (d, i, u)
        self._seg = best[1]
        return self.arc[best[1]] + best[2] * self.seg_len[best[1]]

    def _point_at(self, s):
        s = min(max(s, 0.0), self.arc[-1])
        i = int(np.searchsorted(self.arc, s, side="right") - 1)
        i = min(i, len(self.seg_len) - 1)
        L = self.seg_len[i]
        u = 0.0 if L == 0 else (s - self.arc[i]) / L
        return self.pts[i] + u * (self.pts[i + 1] - self.pts[i])

    def action(self, state):
        w, g = self.world, self.gains
        p, v = state.position, state.velocity
        s = self._project(p)
        brake = g.brake_frac * w.max_accel
        d_goal = float(np.hypot(*(self.goal - p)))
        limit = min(w.max_speed, np.sqrt(2.0 * brake * max(d_goal - g.settle_tol, 0.0)))
        # next interior vertex ahead is a turn (collinear points were removed)
        for j in range(1, len(self.pts) - 1):
            if self.arc[j] > s + 1e-9:
                limit = min(limit, np.sqrt(g.turn_speed**2 + 2.0 * brake * (self.arc[j] - s)))
                break
        target = self._point_at(s + g.lookahead)
        if self.arc[-1] - s < g.lookahead:
            target = self.goal
        d = target - p
        dist = float(np.hypot(*d))
        v_des = np.zeros(2) if dist < 1e-9 else d / dist * min(limit, dist / w.dt)
        return clip_action(w, (v_des - v * (1.0 - w.damping)) / w.dt)

    def settled(self, state):
        g = self.gains
        return (
            float(np.hypot(*(state.position - self.goal))) < g.settle_tol
            and float(np.hypot(*state.velocity)) < g.settle_tol
        )


def rollout_expert(world, start_xy, goal_cell, rng=None, jitter=0.0, max_steps=None, settle=True):
    """Roll the tracker out in the deterministic env.

    Returns ``(states, actions, first_reach_step, collided)``; ``states`` has
    one more row than ``actions``. With ``settle`` the rollout continues past
    the goal radius until the agent stops at the goal centre.
    """
    world_det = world if world.epsilon == 0.0 else world.with_overrides(epsilon=0.0)
    start_cell = world.cell_of(start_xy)
    cells = expert_path(world_det, start_cell, goal_cell)
    tracker = WaypointTracker(world_det, start_xy, cells)
    goal_xy = world.cell_center(goal_cell)
    state = EnvState(np.asarray(start_xy, dtype=np.float64).copy(), np.zeros(2), 0)
    states, actions = [state.as_vector()], []
    first_reach, collided = None, False
    limit = max_steps if max_steps is not None else 2 * world.t_max
    for _ in range(limit):
        a = tracker.action(state)
        if jitter > 0.0 and rng is not None:
            a = clip_action(world, a + rng.normal(0.0, jitter * world.max_accel, size=2))
        res = step(world_det, state, a, None, goal=goal_xy)
        state = res.state
        collided |= res.collision
        states.append(state.as_vector())
        actions.append(res.action)
        if res.reward > 0 and first_reach is None:
            first_reach = state.t
            if not settle:
                break
        if settle and first_reach is not None and tracker.settled(state):
            break
    return np.array(states), np.array(actions).reshape(-1, 2), first_reach, collided
