"""Replanning strategies and the per-tick replanning controller.

A *tick* is one plan row: with a plan stride of ``s`` env steps per row, the
controller is consulted every ``s`` env steps. Rows ``0..k`` of the active
plan's trace hold observed states; ``k`` advances by one per tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .diffusion import Conditioning, partial_denoise, sample_plan, start_goal_cond
from .likelihood import Decision, ExecutionTrace, decide, kl_probe, score


class ReplanError(ValueError):
    pass


class Variant(str, Enum):
    RDM = "rdm"
    DIFFUSER = "diffuser"  # plan once, extend only on exhaustion
    DD = "dd"  # fixed intervals
    SDM = "sdm"  # state-distance trigger
    RPDM = "rpdm"  # likelihood trigger, previous-context strategy


class Kind(str, Enum):
    INITIAL = "initial"
    SCRATCH = "scratch"
    FUTURE = "future"
    PREV = "prev"


@dataclass(frozen=True)
class ReplanBudget:
    n_scratch: int
    n_prev: int
    n_future: int

    def validate(self):
        if not (1 <= self.n_future <= self.n_scratch and 1 <= self.n_prev <= self.n_scratch):
            raise ReplanError(f"need 1 <= n_future, n_prev <= n_scratch: {self}")
        return self

    def cost(self, kind):
        return {Kind.INITIAL: self.n_scratch, Kind.SCRATCH: self.n_scratch,
                Kind.FUTURE: self.n_future, Kind.PREV: self.n_prev}[Kind(kind)]


@dataclass(frozen=True)
class ReplanPolicy:
    variant: Variant = Variant.RDM
    theta_future: float = 0.7
    theta_scratch: float = 0.5
    interval_scratch: int = 32
    interval_future: int = 4
    delta: float = 0.1
    cooldown: int = 2

    def validate(self):
        try:
            object.__setattr__(self, "variant", Variant(self.variant))
        except ValueError:
            raise ReplanError(f"unknown policy variant {self.variant!r}") from None
        if not 0.0 <= self.theta_scratch <= self.theta_future <= 1.0:
            raise ReplanError("need 0 <= theta_scratch <= theta_future <= 1")
        if not self.interval_scratch > self.interval_future >= 1:
            raise ReplanError("need interval_scratch > interval_future >= 1")
        if self.delta <= 0:
            raise ReplanError("delta must be positive")
        return self

    @property
    def uses_likelihood(self):
        return self.variant in (Variant.RDM, Variant.RPDM)


@dataclass
class DecisionRecord:
    t: int  # env step
    tick: int
    score: float | None
    decision: str
    kind: str | None  # strategy actually run, None when continuing
    steps: int  # diffusion steps consumed by this decision
    forced: bool = False


@dataclass
class ReplanStats:
    n_scratch: int = 0
    n_future: int = 0
    n_prev: int = 0
    steps: int = 0
    initial: int = 0
    log: list = field(default_factory=list)

    def charge(self, kind, budget):
        kind = Kind(kind)
        if kind is Kind.INITIAL:
            self.initial += 1
        elif kind is Kind.SCRATCH:
            self.n_scratch += 1
        elif kind is Kind.FUTURE:
            self.n_future += 1
        else:
            self.n_prev += 1
        cost = budget.cost(kind)
        self.steps += cost
        return cost

    def expected_steps(self, budget):
        return (budget.n_scratch * (self.initial + self.n_scratch) + budget.n_future * self.n_future
                + budget.n_prev * self.n_prev)

    @property
    def replans(self):
        return self.n_scratch + self.n_future + self.n_prev


# -- strategies ---------------------------------------------------------------------


def replan_scratch(model, current_state, goal, rng):
    """Fresh plan from noise with row 0 pinned to the current state and row H-1 to the goal."""
    return sample_plan(model, start_goal_cond(current_state, goal, model.horizon), rng)


def replan_prev_context(model, trace, n_prev, rng):
    """Partially re-denoise the trace with the executed rows 0..k held fixed."""
    H = trace.H
    if trace.k >= H - 1:
        raise ReplanError(f"cursor k={trace.k} leaves nothing to replan (H={H})")
    if n_prev == 0:
        return trace.plan.copy()
    rows = tuple(range(trace.k + 1)) + (H - 1,)
    values = np.concatenate([trace.plan[: trace.k + 1], trace.goal[None]], axis=0)
    cond = Conditioning(rows, values, trace.goal)
    return partial_denoise(model, trace.plan, n_prev, cond, rng)


def shift_and_pad(trace):
    """(s_k, s_{k+1}, ..., s_{H-1}, s_{H-1}, ...): drop executed rows, repeat the last one."""
    k = trace.k
    tail = trace.plan[k:]
    pad = np.repeat(trace.plan[-1:], k, axis=0)
    return np.concatenate([tail, pad], axis=0)


def replan_future_context(model, trace, n_future, rng):
    """Shift the remaining plan to start at the current state and partially re-denoise it."""
    tau = shift_and_pad(trace)
    if n_future == 0:
        return tau
    H = trace.H
    cond = Conditioning((0, H - 1), np.stack([tau[0], trace.goal]), trace.goal)
    return partial_denoise(model, tau, n_future, cond, rng)


# -- controller -----------------------------------------------------------------------


@dataclass
class Outcome:
    plan: np.ndarray | None  # new plan (cursor resets to 0) or None to keep the current one
    decision: Decision
    kind: Kind | None
    steps: int
    score: float | None = None
    report: tuple | None = None  # (kl, per_step, profile) when probed
    keep_cursor: bool = False  # previous-context plans keep the executed prefix


class Controller:
    """Per-episode replanning state machine; single owner."""

    def __init__(self, policy, model, budget, goal, probe=None, calibration=None, cap=None):
        self.policy = policy.validate()
        self.model = model
        self.budget = budget.validate()
        self.goal = np.asarray(goal, dtype=np.float32)
        self.probe = probe
        self.cal = calibration
        self.cap = cap  # per-episode diffusion-step cap (equal-budget mode)
        if self.policy.uses_likelihood and (probe is None or calibration is None):
            raise ReplanError("likelihood-driven policies need a probe config and a calibration")
        self.stats = ReplanStats()
        self.cooldown_left = 0

    def initial_plan(self, state, rng):
        plan = replan_scratch(self.model, state, self.goal, rng)
        self.stats.charge(Kind.INITIAL, self.budget)
        self.stats.log.append(DecisionRecord(0, 0, None, Decision.REPLAN_SCRATCH.value, Kind.INITIAL.value,
                                             self.budget.n_scratch))
        return plan

    def _remaining(self):
        return None if self.cap is None else self.cap - self.stats.steps

    def _affordable(self, kind):
        rem = self._remaining()
        if rem is None:
            return kind
        if kind is Kind.SCRATCH and rem < self.budget.n_scratch:
            kind = Kind.FUTURE
        if rem < self.budget.cost(kind):
            return None
        return kind

    def step(self, trace, planned_row, tick, t, rng):
        """Decide at one tick. ``planned_row`` is the plan's row k before it was overwritten."""
        p, H = self.policy, trace.H
        s = rep = None
        exhausted = trace.k >= H - 1
        if exhausted:
            decision, kind = Decision.REPLAN_FUTURE, Kind.FUTURE
        elif p.variant is Variant.DD:
            if tick % p.interval_scratch == 0:
                decision, kind = Decision.REPLAN_SCRATCH, Kind.SCRATCH
            elif tick % p.interval_future == 0:
                decision, kind = Decision.REPLAN_FUTURE, Kind.FUTURE
            else:
                decision, kind = Decision.CONTINUE, None
        elif p.variant is Variant.DIFFUSER or self.cooldown_left > 0:
            decision, kind = Decision.CONTINUE, None
        elif p.variant is Variant.SDM:
            if float(np.linalg.norm(trace.plan[trace.k] - planned_row)) > p.delta:
                decision, kind = Decision.REPLAN_FUTURE, Kind.FUTURE
            else:
                decision, kind = Decision.CONTINUE, None
        else:
            rep = kl_probe(self.model, trace, self.probe, rng)
            s = score(rep[0], self.cal)
            decision = decide(s, p.theta_future, p.theta_scratch)
            if decision is Decision.CONTINUE:
                kind = None
            elif p.variant is Variant.RPDM:
                kind = Kind.PREV
            else:
                kind = Kind.SCRATCH if decision is Decision.REPLAN_SCRATCH else Kind.FUTURE

        if kind is not None and not exhausted:
            kind = self._affordable(kind)
            if kind is None:
                decision = Decision.CONTINUE
            elif kind is Kind.FUTURE and decision is Decision.REPLAN_SCRATCH:
                decision = Decision.REPLAN_FUTURE
        if self.cooldown_left > 0:
            self.cooldown_left -= 1

        plan, steps = None, 0
        if kind is Kind.SCRATCH:
            plan = replan_scratch(self.model, trace.plan[trace.k], self.goal, rng)
        elif kind is Kind.FUTURE:
            plan = replan_future_context(self.model, trace, self.budget.n_future, rng)
        elif kind is Kind.PREV:
            plan = replan_prev_context(self.model, trace, self.budget.n_prev, rng)
        if kind is not None:
            steps = self.stats.charge(kind, self.budget)
            if p.variant is not Variant.DD:
                self.cooldown_left = p.cooldown
        self.stats.log.append(DecisionRecord(t, tick, s, decision.value, None if kind is None else kind.value,
                                             steps, forced=exhausted))
        return Outcome(plan, decision, kind, steps, s, rep, keep_cursor=kind is Kind.PREV)


def controller_step(policy, model, trace, planned_row, budget, rng, controller=None, tick=0, t=0,
                    probe=None, calibration=None):
    """Functional wrapper: one decision for ``trace``; returns (new plan or None, decision, stats)."""
    ctl = controller or Controller(policy, model, budget, trace.goal, probe, calibration)
    out = ctl.step(trace, planned_row, tick, t, rng)
    return out.plan, out.decision, ctl.stats


__all__ = [
    "Controller",
    "DecisionRecord",
    "ExecutionTrace",
    "Kind",
    "Outcome",
    "ReplanBudget",
    "ReplanError",
    "ReplanPolicy",
    "ReplanStats",
    "Variant",
    "controller_step",
    "replan_future_context",
    "replan_prev_context",
    "replan_scratch",
    "shift_and_pad",
]
