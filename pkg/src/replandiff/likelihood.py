"""Feasibility probe: how well does the learned reverse step recover a noised trajectory?

A trajectory is noised to a few small diffusion steps; at each, the mean of
the true posterior ``q(tau_{i-1} | tau_i, tau)`` is compared with the learned
reverse mean. Both Gaussians share the variance ``post_var[i]``, so their KL
is a scaled squared mean difference. The average over steps and draws is
standardised against fresh model samples and mapped to a score in [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .diffusion import Conditioning, embed_cond, p_mean, posterior_params, q_sample, sample_plan, start_goal_cond

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6
CHUNK = 256  # max trajectories per denoiser call


class ProbeError(ValueError):
    pass


class Decision(str, Enum):
    CONTINUE = "continue"
    REPLAN_FUTURE = "replan_future"
    REPLAN_SCRATCH = "replan_scratch"

    @property
    def severity(self):
        return {"continue": 0, "replan_future": 1, "replan_scratch": 2}[self.value]


@dataclass
class ExecutionTrace:
    """Plan rows with rows ``0..k`` replaced by observed states (normalised units)."""

    plan: np.ndarray  # (H, D)
    k: int
    goal: np.ndarray  # (D,)
    actions: list = field(default_factory=list)  # executed actions, diagnostics only

    def __post_init__(self):
        self.plan = np.asarray(self.plan, dtype=np.float32)
        H = self.plan.shape[0]
        if not 0 <= self.k < H:
            raise ProbeError(f"cursor k={self.k} outside [0, {H})")

    @property
    def H(self):
        return self.plan.shape[0]

    @classmethod
    def build(cls, plan, observed, goal):
        """Overwrite the first ``len(observed)`` rows of ``plan`` with ``observed``."""
        tau = np.array(plan, dtype=np.float32)
        observed = np.asarray(observed, dtype=np.float32).reshape(-1, tau.shape[1])
        tau[: len(observed)] = observed
        return cls(tau, len(observed) - 1, np.asarray(goal, dtype=np.float32))


@dataclass(frozen=True)
class ProbeConfig:
    steps: tuple = (3, 5, 8)
    draws: int = 4

    def validate(self, schedule):
        if not self.steps or self.draws < 1:
            raise ProbeError("probe needs at least one step and draws >= 1")
        for i in self.steps:
            if not 1 <= i <= schedule.N:
                raise ProbeError(f"probe step {i} outside [1, {schedule.N}]")
            if schedule.post_var[i] <= 0:
                raise ProbeError(f"probe step {i} has zero posterior variance")
        return self


@dataclass(frozen=True)
class Calibration:
    mu: float
    sigma: float
    M: int

    def __post_init__(self):
        object.__setattr__(self, "sigma", max(float(self.sigma), SIGMA_FLOOR))
        object.__setattr__(self, "mu", float(self.mu))


@dataclass
class LikelihoodReport:
    per_step: np.ndarray  # (P,) mean KL per probe step
    kl: float
    score: float
    decision: Decision
    profile: np.ndarray  # (H,) per-row KL


def _kl_batch(model, taus, steps, goals, rng):
    """KL and per-row profile for each (trajectory, step) pair; fresh noise per pair.

    With goals, rows 0 and H-1 stay clean in ``tau_i`` exactly as inpainting
    holds them while sampling.
    """
    sched = model.schedule
    B, H, D = taus.shape
    eps = rng.standard_normal(taus.shape)
    kls = np.empty(B)
    prof = np.empty((B, H))
    for a in range(0, B, CHUNK):
        sl = slice(a, a + CHUNK)
        tau, st = taus[sl], steps[sl]
        tau_i = q_sample(sched, tau, st, eps[sl])
        if goals is not None:
            tau_i[:, [0, H - 1]] = tau[:, [0, H - 1]]
        mu_post, var = posterior_params(sched, tau_i, tau, st)
        cond = None if goals is None else Conditioning((0, H - 1), tau[:, [0, H - 1]], goals[sl])
        emb = embed_cond(model, cond, len(tau))
        mu_model = p_mean(model, tau_i, st, emb=emb)
        sq = ((mu_post - mu_model) ** 2).sum(axis=-1)  # (b, H), float64
        denom = 2.0 * np.asarray(var, dtype=np.float64)[:, None]
        prof[sl] = sq / (denom * D)
        kls[sl] = sq.sum(axis=-1) / (denom[:, 0] * H * D)
    return kls, prof


def kl_step(model, tau_ref, i, rng, goal=None):
    """Per-element KL between posterior and learned reverse step at step ``i``.

    With a ``goal`` the probe is conditioned: the goal feeds the embedding and
    the endpoint rows are held clean. Returns ``(kl, profile)``; for a batch
    (B, H, D) both gain a leading axis.
    """
    model.schedule.check_step(i)
    if model.schedule.post_var[i] <= 0:
        raise ProbeError(f"step {i} has zero posterior variance")
    tau = np.asarray(tau_ref, dtype=np.float32)
    single = tau.ndim == 2
    taus = tau[None] if single else tau
    goals = None if goal is None else np.broadcast_to(np.asarray(goal, np.float32), (len(taus), taus.shape[-1]))
    kls, prof = _kl_batch(model, taus, np.full(len(taus), i), goals, rng)
    return (float(kls[0]), prof[0]) if single else (kls, prof)


def kl_probe_batch(model, taus, goals, cfg, rng):
    """KL-bar for each of M trajectories: mean over probe steps and draws.

    Returns ``(kl (M,), per_step (M, P), profile (M, H))``.
    """
    cfg.validate(model.schedule)
    taus = np.asarray(taus, dtype=np.float32)
    M, H, D = taus.shape
    P, K = len(cfg.steps), cfg.draws
    rep = np.repeat(taus, P * K, axis=0)
    steps = np.tile(np.repeat(np.asarray(cfg.steps), K), M)
    g = None if goals is None else np.repeat(np.asarray(goals, np.float32).reshape(M, D), P * K, axis=0)
    kls, prof = _kl_batch(model, rep, steps, g, rng)
    per_step = kls.reshape(M, P, K).mean(axis=2)
    profile = prof.reshape(M, P * K, H).mean(axis=1)
    return per_step.mean(axis=1), per_step, profile


def kl_probe(model, trace, cfg, rng):
    """KL-bar of one execution trace over the full H x D matrix (prefix and suffix)."""
    kl, per_step, profile = kl_probe_batch(model, trace.plan[None], trace.goal[None], cfg, rng)
    return float(kl[0]), per_step[0], profile[0]


def score(kl, cal):
    """min(1, exp(-max(0, kl - mu) / sigma)); non-increasing in ``kl``."""
    return min(1.0, math.exp(-max(0.0, float(kl) - cal.mu) / cal.sigma))


def decide(s, theta_future=0.7, theta_scratch=0.5):
    if not 0.0 <= theta_scratch <= theta_future <= 1.0:
        raise ProbeError(f"need 0 <= theta_scratch ({theta_scratch}) <= theta_future ({theta_future}) <= 1")
    if s < theta_scratch:
        return Decision.REPLAN_SCRATCH
    if s < theta_future:
        return Decision.REPLAN_FUTURE
    return Decision.CONTINUE


def report(model, trace, cfg, cal, rng, theta_future=0.7, theta_scratch=0.5):
    kl, per_step, profile = kl_probe(model, trace, cfg, rng)
    s = score(kl, cal)
    return LikelihoodReport(per_step, kl, s, decide(s, theta_future, theta_scratch), profile)


def fresh_plans(model, world, M, rng):
    """M plans sampled between random free start/goal cells (normalised), with their goals."""
    from .envs.dataset import sample_start_goal

    H = model.config.horizon
    starts, goals = [], []
    for _ in range(M):
        _, g, xy = sample_start_goal(world, rng)
        starts.append(model.normalize(np.r_[xy, 0.0, 0.0]))
        goals.append(model.normalize(np.r_[world.cell_center(g), 0.0, 0.0]))
    starts, goals = np.array(starts), np.array(goals)
    plans = sample_plan(model, start_goal_cond(starts, goals, H), rng, batch=M)
    return plans, goals


def calibrate(model, world, M, rng, cfg=None, train_loss=None, loss_threshold=0.1):
    """Mean and std of KL-bar over M fresh plans (k = 0)."""
    if M < 16:
        raise ProbeError(f"calibration needs M >= 16, got {M}")
    if train_loss is not None and train_loss > loss_threshold:
        log.warning("calibrating a model whose training loss %.4f exceeds %.2f", train_loss, loss_threshold)
    cfg = cfg or ProbeConfig()
    plans, goals = fresh_plans(model, world, M, rng)
    kl, _, _ = kl_probe_batch(model, plans, goals, cfg, rng)
    return Calibration(float(kl.mean()), float(kl.std()), M)
