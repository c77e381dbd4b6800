"""Point-mass dynamics with wall contact and epsilon-random actions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geom

CONTACT_MARGIN = 1e-3


@dataclass
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    t: int = 0

    def as_vector(self):
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, s, t=0):
        s = np.asarray(s, dtype=np.float64)
        return cls(position=s[:2].copy(), velocity=s[2:4].copy(), t=t)


@dataclass
class StepResult:
    state: EnvState
    reward: float
    done: bool
    collision: bool
    intervention: bool
    randomized: bool
    action: np.ndarray  # the action actually applied


def clip_action(world, action):
    return np.clip(np.asarray(action, dtype=np.float64), -world.max_accel, world.max_accel)


def integrate(world, state, action):
    """Unconstrained successor: (new velocity, intended new position)."""
    v = state.velocity * (1.0 - world.damping) + action * world.dt
    speed = float(np.hypot(v[0], v[1]))
    if speed > world.max_speed:
        v = v * (world.max_speed / speed)
    return v, state.position + v * world.dt


def step(world, state, action, rng=None, goal=None):
    """Advance one env step.

    Doors take their scheduled state for step ``state.t`` before motion. With
    probability ``world.epsilon`` the commanded action is replaced by a uniform
    random one; one uniform is consumed from ``rng`` per step either way so
    runs at different epsilon share their random stream.
    """
    action = clip_action(world, action)
    randomized = False
    if rng is not None:
        u = rng.random()
        if u < world.epsilon:
            action = rng.uniform(-world.max_accel, world.max_accel, size=2)
            randomized = True
    elif world.epsilon > 0.0:
        raise ValueError("a stochastic world needs an rng")

    mask = world.blocked_mask(state.t)
    v, p_new = integrate(world, state, action)
    p = state.position
    t_hit, _, _ = geom.segment_contact(mask, p[0], p[1], p_new[0], p_new[1], world.cell_size)
    collision = t_hit >= 0.0
    if collision:
        length = float(np.hypot(*(p_new - p)))
        frac = max(t_hit - CONTACT_MARGIN / length, 0.0) if length > 0 else 0.0
        p_new = p + frac * (p_new - p)
        v = np.zeros(2)

    goal_xy = world.cell_center(world.goal_cell) if goal is None else np.asarray(goal, dtype=np.float64)[:2]
    reached = float(np.hypot(*(p_new - goal_xy))) <= world.goal_radius
    t_next = state.t + 1
    return StepResult(
        state=EnvState(position=p_new, velocity=v, t=t_next),
        reward=1.0 if reached else 0.0,
        done=reached or t_next >= world.t_max,
        collision=collision,
        intervention=state.t in world.door_events,
        randomized=randomized,
        action=action,
    )


def inverse_dynamics(world, s, s_next):
    """Action moving state ``s`` to the position of ``s_next`` in one step, clipped to the accel box."""
    s = np.asarray(s, dtype=np.float64)
    s_next = np.asarray(s_next, dtype=np.float64)
    v_target = (s_next[:2] - s[:2]) / world.dt
    a = (v_target - s[2:4] * (1.0 - world.damping)) / world.dt
    return clip_action(world, a)


def collision_free(world, trajectory, t=0):
    """Check consecutive-state segments of a denormalized trajectory against walls and closed doors.

    Returns ``(ok, first_bad_segment)``; ``first_bad_segment`` is None when ok.
    """
    xy = np.asarray(trajectory, dtype=np.float64)[:, :2]
    idx = geom.first_violation(world.blocked_mask(t), xy, world.cell_size)
    return (idx < 0), (None if idx < 0 else idx)
