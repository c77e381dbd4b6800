"""DDPM machinery over normalised H x D trajectories.

Schedules are stored with a sentinel at index 0 (``alpha_bar[0] = 1``,
``beta[0] = 0``) so arrays are indexed directly by the diffusion step
``i`` in ``1..N``. Coefficients are float64; trajectories are float32.

All sampling functions accept a single trajectory (H, D) or a batch
(B, H, D); the conditioning broadcasts accordingly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .denoiser import DenoiserConfig, DenoiserParams, goal_embed, predict_noise

log = logging.getLogger(__name__)

CLIP = 1.5
X0_CLIP = 1.0  # clean-estimate clip inside each reverse step (data lie in [-1, 1])


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: str
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    post_var: np.ndarray

    @property
    def N(self):
        return len(self.betas) - 1

    def check_step(self, i, lo=1):
        i = np.asarray(i)
        if np.any(i < lo) or np.any(i > self.N):
            raise ScheduleError(f"diffusion step {i.tolist()} outside [{lo}, {self.N}]")


def make_schedule(N, kind="cosine"):
    """Linear (1e-4 .. 2e-2) or cosine (s = 0.008) beta schedule for N steps."""
    if int(N) != N or N < 2:
        raise ScheduleError(f"need N >= 2, got {N}")
    N = int(N)
    if kind == "linear":
        betas = np.linspace(1e-4, 2e-2, N)
    elif kind == "cosine":
        s = 0.008
        f = np.cos((np.arange(N + 1) / N + s) / (1 + s) * math.pi / 2) ** 2
        abar = f / f[0]
        betas = np.clip(1.0 - abar[1:] / abar[:-1], 0.0, 0.999)
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    betas = np.concatenate([[0.0], betas])
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    post_var = np.zeros(N + 1)
    post_var[1:] = (1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:]) * betas[1:]
    for a in (betas, alphas, alpha_bars, post_var):
        a.setflags(write=False)
    return NoiseSchedule(kind, betas, alphas, alpha_bars, post_var)


# -- normalisation ------------------------------------------------------------


def _span(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    span = hi - lo
    degenerate = span <= 0
    return lo, np.where(degenerate, 1.0, span), degenerate


def normalize(states, lo, hi):
    """Affine map of each dimension from [lo, hi] to [-1, 1]; degenerate dimensions map to 0."""
    lo, span, bad = _span(lo, hi)
    if bad.any():
        log.warning("degenerate normalisation dimensions %s mapped to 0", np.flatnonzero(bad).tolist())
    out = 2.0 * (np.asarray(states, dtype=np.float64) - lo) / span - 1.0
    out = np.where(bad, 0.0, out)
    return out.astype(np.float32)


def denormalize(x, lo, hi):
    lo, span, bad = _span(lo, hi)
    out = (np.asarray(x, dtype=np.float64) + 1.0) * 0.5 * span + lo
    out = np.where(bad, lo, out)
    return out.astype(np.float32)


# -- model and conditioning -----------------------------------------------------


@dataclass(eq=False)
class DiffusionModel:
    schedule: NoiseSchedule
    params: DenoiserParams
    config: DenoiserConfig
    stats_min: np.ndarray
    stats_max: np.ndarray
    stride: int = 1  # env steps between consecutive plan rows

    @property
    def N(self):
        return self.schedule.N

    @property
    def horizon(self):
        return self.config.horizon

    def normalize(self, states):
        return normalize(states, self.stats_min, self.stats_max)

    def denormalize(self, x):
        return denormalize(x, self.stats_min, self.stats_max)


@dataclass
class Conditioning:
    """Pinned rows (inpainting targets) and an optional goal for the condition embedding.

    ``values`` is (R, D) or (B, R, D) in normalised units; ``goal`` is (D,),
    (B, D) or None for the unconditional (zero) embedding. When row 0 is
    pinned its value also feeds the embedding as the start state.
    """

    rows: tuple = ()
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.float32))
    goal: np.ndarray | None = None

    @property
    def start(self):
        return self.values[..., self.rows.index(0), :] if 0 in self.rows else None

    def __post_init__(self):
        self.rows = tuple(int(r) for r in self.rows)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.rows and self.values.shape[-2] != len(self.rows):
            raise ValueError(f"{len(self.rows)} pinned rows but values of shape {self.values.shape}")
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=np.float32)

    def check(self, H):
        bad = [r for r in self.rows if not 0 <= r < H]
        if bad:
            raise ValueError(f"pinned rows {bad} outside [0, {H})")

    def apply(self, tau):
        """Overwrite pinned rows in place with their clean values."""
        if self.rows:
            tau[..., list(self.rows), :] = self.values
        return tau


def start_goal_cond(start, goal, H):
    """Pin row 0 to ``start`` and row H-1 to ``goal``; the goal also feeds the embedding."""
    start = np.asarray(start, dtype=np.float32)
    goal = np.asarray(goal, dtype=np.float32)
    return Conditioning((0, H - 1), np.stack([start, goal], axis=-2), goal)


def embed_cond(model, cond, batch):
    E = model.config.embed_dim
    if cond is None or cond.goal is None:
        return np.zeros((batch, E), dtype=np.float32)
    D = cond.goal.shape[-1]
    g = np.broadcast_to(cond.goal, (batch, D))
    s = cond.start
    s = None if s is None else np.broadcast_to(s, (batch, D))
    return goal_embed(model.params, g, s).data


# -- forward process and posterior --------------------------------------------------


def q_sample(sched, tau0, i, eps):
    """Closed-form marginal: sqrt(abar_i) tau0 + sqrt(1 - abar_i) eps; ``i`` scalar or per-batch."""
    sched.check_step(i)
    ab = _bcast(sched.alpha_bars[np.asarray(i)], np.ndim(tau0))
    out = np.sqrt(ab) * np.asarray(tau0, dtype=np.float64) + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)
    return out.astype(np.float32)


def posterior_coefs(sched, i):
    """(c0, ci) with posterior mean = c0 * tau0 + ci * tau_i."""
    i = np.asarray(i)
    ab, ab_prev = sched.alpha_bars[i], sched.alpha_bars[i - 1]
    c0 = np.sqrt(ab_prev) * sched.betas[i] / (1.0 - ab)
    ci = np.sqrt(sched.alphas[i]) * (1.0 - ab_prev) / (1.0 - ab)
    return c0, ci


def posterior_params(sched, tau_i, tau0, i):
    """Mean (float64) and variance of q(tau_{i-1} | tau_i, tau0)."""
    sched.check_step(i)
    c0, ci = posterior_coefs(sched, i)
    nd = np.ndim(tau0)
    mu = _bcast(c0, nd) * np.asarray(tau0, dtype=np.float64) + _bcast(ci, nd) * np.asarray(tau_i, dtype=np.float64)
    return mu, sched.post_var[np.asarray(i)]


def _bcast(v, ndim):
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim)) if v.ndim else v


# -- reverse process -------------------------------------------------------------------


def predict_eps(model, tau_i, i, cond=None, emb=None):
    tau_i = np.asarray(tau_i, dtype=np.float32)
    single = tau_i.ndim == 2
    B = 1 if single else tau_i.shape[0]
    if emb is None:
        emb = embed_cond(model, cond, B)
    eps = predict_noise(model.params, tau_i, np.broadcast_to(np.asarray(i), (B,)), emb[0] if single else emb)
    return eps.data


def p_mean(model, tau_i, i, cond=None, emb=None):
    """Learned reverse mean (float64): (tau_i - beta_i / sqrt(1 - abar_i) * eps_hat) / sqrt(alpha_i)."""
    sched = model.schedule
    sched.check_step(i)
    eps = predict_eps(model, tau_i, i, cond, emb).astype(np.float64)
    nd = np.ndim(tau_i)
    i = np.asarray(i)
    k = _bcast(sched.betas[i] / np.sqrt(1.0 - sched.alpha_bars[i]), nd)
    return (np.asarray(tau_i, dtype=np.float64) - k * eps) / _bcast(np.sqrt(sched.alphas[i]), nd)


def p_sample_step(model, tau_i, i, cond, rng, emb=None):
    """One reverse step with variance post_var[i] (no noise at i = 1), then inpainting.

    The mean is the posterior mean around the implied clean estimate
    ``tau0_hat``, clipped to +-X0_CLIP first. Without clipping this equals
    :func:`p_mean`; the clip only bites at large ``i`` where ``1 / sqrt(alpha_i)``
    amplifies noise-prediction error.
    """
    sched = model.schedule
    sched.check_step(i)
    eps = predict_eps(model, tau_i, i, cond, emb).astype(np.float64)
    ab = sched.alpha_bars[i]
    tau_i = np.asarray(tau_i, dtype=np.float64)
    tau0_hat = np.clip((tau_i - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab), -X0_CLIP, X0_CLIP)
    c0, ci = posterior_coefs(sched, i)
    mu = c0 * tau0_hat + ci * tau_i
    if i > 1:
        mu = mu + math.sqrt(sched.post_var[i]) * rng.standard_normal(mu.shape)
    out = mu.astype(np.float32)
    if cond is not None:
        cond.apply(out)
    return out


def _denoise(model, tau, n_steps, cond, rng):
    B = 1 if tau.ndim == 2 else tau.shape[0]
    emb = embed_cond(model, cond, B)
    for i in range(n_steps, 0, -1):
        tau = p_sample_step(model, tau, i, cond, rng, emb)
    tau = np.clip(tau, -CLIP, CLIP)
    if cond is not None:
        cond.apply(tau)
    return tau


def sample_plan(model, cond, rng, batch=None):
    """Full reverse chain from standard normal noise; pinned rows exact, values clipped to +-1.5."""
    H, D = model.config.horizon, model.config.state_dim
    if cond is not None:
        cond.check(H)
    shape = (H, D) if batch is None else (batch, H, D)
    tau = rng.standard_normal(shape).astype(np.float32)
    if cond is not None:
        cond.apply(tau)
    return _denoise(model, tau, model.N, cond, rng)


def partial_denoise(model, tau_init, n_steps, cond, rng):
    """Noise ``tau_init`` to step ``n_steps`` and denoise back; ``n_steps = 0`` returns the input."""
    tau_init = np.asarray(tau_init, dtype=np.float32)
    if n_steps == 0:
        return tau_init.copy()
    model.schedule.check_step(n_steps)
    if cond is not None:
        cond.check(model.config.horizon)
    eps = rng.standard_normal(tau_init.shape)
    tau = q_sample(model.schedule, tau_init, n_steps, eps)
    if cond is not None:
        cond.apply(tau)
    return _denoise(model, tau, n_steps, cond, rng)


# -- training objective ------------------------------------------------------------------


def training_loss(model, tau0, rng, goals=None, cond_drop=0.0, pin_prob=1.0):
    """Mean squared error of the noise prediction at a random step per sample.

    ``goals`` (B, D) and each window's first row feed the condition embedding
    (goals default to each window's last row); with probability ``cond_drop`` a sample's embedding is zeroed.
    With probability ``pin_prob`` a sample's first and last rows are shown
    clean, as inpainting does at sampling time; the target for every row is
    the noise consistent with ``tau_i`` and ``tau0``, which for clean rows is
    ``(1 - sqrt(abar)) tau0 / sqrt(1 - abar)``. Returns a scalar Tensor.
    """
    tau0 = np.asarray(tau0, dtype=np.float32)
    if tau0.ndim != 3 or tau0.shape[0] == 0:
        raise ValueError(f"training_loss needs a non-empty (B, H, D) batch, got {tau0.shape}")
    B, H, D = tau0.shape
    sched = model.schedule
    steps = rng.integers(1, model.N + 1, size=B)
    eps = rng.standard_normal(tau0.shape).astype(np.float32)
    tau_i = q_sample(sched, tau0, steps, eps)
    target = eps
    if pin_prob > 0:
        pinned = rng.random(B) < pin_prob
        ends = np.ix_(pinned, [0, H - 1])
        tau_i[ends] = tau0[ends]
        ab = _bcast(sched.alpha_bars[steps], 3)
        target = ((tau_i - np.sqrt(ab) * tau0) / np.sqrt(1.0 - ab)).astype(np.float32)
    if goals is None:
        goals = tau0[:, -1, :]
    emb = goal_embed(model.params, goals, tau0[:, 0, :])
    if cond_drop > 0:
        keep = (rng.random(B) >= cond_drop).astype(np.float32)[:, None]
        emb = nk.mul(emb, nk.Tensor(keep))
    pred = predict_noise(model.params, tau_i, steps, emb)
    err = nk.add(pred, nk.Tensor(-target))
    return nk.mean(nk.mul(err, err))
