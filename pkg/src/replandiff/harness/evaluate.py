"""Closed-loop evaluation: episodes, metrics and the ``eval`` command."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..envs.dataset import sample_start_goal
from ..envs.dynamics import EnvState, inverse_dynamics, step
from ..envs.expert import rollout_expert
from ..envs.world import load_world
from ..likelihood import Decision, ExecutionTrace, ProbeConfig
from ..numkit.rng import make_rng
from ..replan import Controller, Kind, ReplanBudget, ReplanPolicy, Variant
from .checkpoint import load_checkpoint
from .config import ConfigError
from .formats import dumps_json, write_csv

log = logging.getLogger(__name__)

EPISODE_COLUMNS = [
    "variant", "seed", "episode", "success", "steps", "expert_steps", "normalized_return",
    "diffusion_steps", "n_scratch", "n_future", "n_prev", "collisions",
]


def step_columns(n_probe):
    return ([
        "variant", "seed", "episode", "t", "x", "y", "vx", "vy",
        "plan_x", "plan_y", "plan_vx", "plan_vy", "ax", "ay", "score", "decision", "replan",
    ] + [f"kl_{j}" for j in range(n_probe)] + ["reward"])


@dataclass
class EpisodeSpec:
    seed: int
    index: int
    start_xy: np.ndarray
    goal_cell: tuple
    expert_steps: int


@dataclass
class EpisodeResult:
    spec: EpisodeSpec
    success: bool
    steps: int
    diffusion_steps: int
    n_scratch: int
    n_future: int
    n_prev: int
    collisions: int
    decisions: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # per-env-step log rows (when recorded)

    @property
    def normalized_return(self):
        return 100.0 * self.spec.expert_steps / self.steps if self.success else 0.0


@dataclass
class EvalSetup:
    """Everything an episode needs besides its spec; shared read-only across workers."""

    world: object
    model: object
    budget: ReplanBudget
    probe: ProbeConfig
    calibration: object
    track_gain: float = 0.5
    cap: int | None = None


def track_action(world, state, lo, hi, frac, gain):
    """Action steering toward the plan point ``frac`` of the way from row ``lo`` to ``hi``.

    The commanded velocity is the planned velocity plus a fraction ``gain`` of
    the correction needed to land on the planned position within one step;
    inverse dynamics turns it into an acceleration.
    """
    tgt = (1.0 - frac) * lo + frac * hi
    p, v_plan = tgt[:2], tgt[2:4]
    v_cmd = v_plan + gain * ((p - state.position) / world.dt - v_plan)
    target = np.concatenate([state.position + v_cmd * world.dt, v_cmd])
    return inverse_dynamics(world, state.as_vector(), target), tgt


def run_episode(setup, policy, spec, record=False):
    world, model = setup.world, setup.model
    H, stride = model.horizon, model.stride
    env_rng = make_rng(spec.seed, spec.index, 0)
    plan_rng = make_rng(spec.seed, spec.index, 1, list(Variant).index(Variant(policy.variant)))
    goal_xy = world.cell_center(spec.goal_cell)
    goal_n = model.normalize(np.r_[goal_xy, 0.0, 0.0])
    ctl = Controller(policy, model, setup.budget, goal_n, setup.probe, setup.calibration, cap=setup.cap)
    state = EnvState(np.array(spec.start_xy, dtype=np.float64), np.zeros(2), 0)
    plan = ctl.initial_plan(model.normalize(state.as_vector()), plan_rng)
    plan_d = model.denormalize(plan)
    obs = [plan[0].copy()]
    k, tick = 0, 0
    success, collisions, rows = False, 0, []
    pending = None  # (score, decision, replan kind, per-step KL) logged on the next env step
    if record:
        pending = (None, Decision.REPLAN_SCRATCH.value, Kind.INITIAL.value, None)
    while True:
        finished = False
        for j in range(stride):
            a, tgt = track_action(world, state, plan_d[k].astype(np.float64), plan_d[k + 1].astype(np.float64),
                                  (j + 1) / stride, setup.track_gain)
            res = step(world, state, a, env_rng, goal=goal_xy)
            collisions += int(res.collision)
            if record:
                sc, dec, kind, kls = pending if pending else (None, "", "", None)
                pending = None
                kl_cols = list(kls) if kls is not None else [""] * len(setup.probe.steps)
                rows.append([state.t, *state.position, *state.velocity, *tgt, *res.action,
                             "" if sc is None else sc, dec, kind or ""] + kl_cols + [res.reward])
            state = res.state
            if res.reward > 0:
                success, finished = True, True
                break
            if res.done:
                finished = True
                break
        if finished:
            break
        tick += 1
        k += 1
        s_n = model.normalize(state.as_vector())
        planned_row = plan[k].copy()
        obs.append(s_n)
        trace = ExecutionTrace.build(plan, np.array(obs), goal_n)
        out = ctl.step(trace, planned_row, tick, state.t, plan_rng)
        if record:
            kls = None if out.report is None else out.report[1]
            pending = (out.score, out.decision.value, None if out.kind is None else out.kind.value, kls)
        if out.plan is not None:
            plan = out.plan
            plan_d = model.denormalize(plan)
            if not out.keep_cursor:
                k, obs = 0, [plan[0].copy()]
    st = ctl.stats
    return EpisodeResult(spec, success, state.t, st.steps, st.n_scratch, st.n_future, st.n_prev, collisions,
                         st.log, rows)


def episode_specs(world, seed, episodes, start_goal="world"):
    """Start/goal per episode from ``(seed, index)``; identical across policy variants."""
    det = world.with_overrides(door_schedule={}, epsilon=0.0)
    specs = []
    for e in range(episodes):
        rng = make_rng(seed, e, 2)
        if start_goal == "world":
            goal = world.goal_cell
            xy = world.cell_center(world.start_cell) + rng.uniform(-0.25, 0.25, size=2) * world.cell_size
        else:
            _, goal, xy = sample_start_goal(det, rng, min_cells=4)
        _, _, reach, _ = rollout_expert(det, xy, goal, settle=False)
        specs.append(EpisodeSpec(seed, e, xy, tuple(goal), int(reach if reach is not None else world.t_max)))
    return specs


def worker_count():
    env = os.environ.get("RDM_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"RDM_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("RDM_THREADS must be >= 1")
        return min(n, cap)
    return cap


def run_variant(setup, policy, specs, record_first=0):
    """Episodes in index order; results are independent of worker scheduling."""
    n = min(worker_count(), len(specs))
    jobs = [(spec, i < record_first) for i, spec in enumerate(specs)]
    if n <= 1:
        return [run_episode(setup, policy, spec, rec) for spec, rec in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda job: run_episode(setup, policy, *job), jobs))


def summarize(results):
    n = len(results)
    succ = [r for r in results if r.success]
    ret = np.array([r.normalized_return for r in results])
    return {
        "episodes": n,
        "success_rate": len(succ) / n if n else 0.0,
        "normalized_return": float(ret.mean()) if n else 0.0,
        "normalized_return_se": float(ret.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "mean_steps_to_goal": float(np.mean([r.steps for r in succ])) if succ else None,
        "total_diffusion_steps": int(sum(r.diffusion_steps for r in results)),
        "mean_diffusion_steps": float(np.mean([r.diffusion_steps for r in results])) if n else 0.0,
        "replans": {
            "scratch": int(sum(r.n_scratch for r in results)),
            "future": int(sum(r.n_future for r in results)),
            "prev": int(sum(r.n_prev for r in results)),
        },
        "collisions": int(sum(r.collisions for r in results)),
    }


def make_policy(cfg, variant):
    i_s, i_f = cfg.intervals()
    return ReplanPolicy(variant, cfg.theta_future, cfg.theta_scratch, i_s, i_f, cfg.sdm_delta, cfg.cooldown).validate()


def make_setup(cfg, ckpt, world=None):
    world = world or load_world(cfg.world)
    overrides = {}
    if cfg.epsilon is not None:
        overrides["epsilon"] = cfg.epsilon
    if not cfg.interventions:
        overrides["door_schedule"] = {}
    if overrides:
        world = world.with_overrides(**overrides)
    model = ckpt.model
    if model.N != cfg.n_diffusion and (cfg.n_scratch is None or cfg.n_scratch > model.N):
        log.info("using the checkpoint's N=%d", model.N)
    n_s = min(cfg.scratch_steps(), model.N)
    budget = ReplanBudget(n_s, min(cfg.prev_steps(), model.N), min(cfg.n_future, model.N)).validate()
    probe = ckpt.probe if ckpt.probe is not None else ProbeConfig(tuple(cfg.probe_steps), cfg.probe_draws)
    cap = None
    if cfg.equal_budget:
        if cfg.budget is None or cfg.budget < budget.n_scratch:
            raise ConfigError("equal_budget needs a budget of at least one initial plan")
        cap = cfg.budget
    return EvalSetup(world, model, budget, probe, ckpt.calibration, cfg.track_gain, cap)


def evaluate(cfg, setup, variants=None, seeds=None):
    """Results per variant: {variant: [EpisodeResult, ...]} over all seeds, in (seed, episode) order."""
    variants = variants or cfg.policies
    if cfg.seed is None:
        raise ConfigError("evaluation needs an explicit --seed")
    seeds = seeds if seeds is not None else [cfg.seed + j for j in range(cfg.n_seeds)]
    needs_cal = any(Variant(v) in (Variant.RDM, Variant.RPDM) for v in variants)
    if needs_cal and setup.calibration is None:
        raise ConfigError("likelihood-driven variants need a calibrated checkpoint (run `calibrate`)")
    out = {}
    specs_by_seed = {s: episode_specs(setup.world, s, cfg.episodes, cfg.start_goal) for s in seeds}
    for v in variants:
        policy = make_policy(cfg, v)
        res = []
        for s in seeds:
            res.extend(run_variant(setup, policy, specs_by_seed[s], record_first=cfg.log_episodes))
        out[v] = res
    return out


def metrics_doc(cfg, results, seeds):
    doc = {"world": cfg.world, "seeds": list(seeds), "episodes_per_seed": cfg.episodes, "variants": {}}
    for v, res in results.items():
        entry = summarize(res)
        entry["per_seed"] = {str(s): summarize([r for r in res if r.spec.seed == s]) for s in seeds}
        doc["variants"][v] = entry
    return doc


def write_results(cfg, results, seeds, out_dir, n_probe, timing=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        f.write(dumps_json(metrics_doc(cfg, results, seeds)))
    ep_rows, step_rows = [], []
    for v, res in results.items():
        for r in res:
            ep_rows.append([v, r.spec.seed, r.spec.index, r.success, r.steps, r.spec.expert_steps,
                            r.normalized_return, r.diffusion_steps, r.n_scratch, r.n_future, r.n_prev, r.collisions])
            for row in r.rows:
                step_rows.append([v, r.spec.seed, r.spec.index] + row)
    write_csv(os.path.join(out_dir, "episodes.csv"), EPISODE_COLUMNS, ep_rows)
    write_csv(os.path.join(out_dir, "steps.csv"), step_columns(n_probe), step_rows)
    if timing is not None:
        with open(os.path.join(out_dir, "timing.json"), "w") as f:
            f.write(dumps_json(timing))


def cmd_eval(cfg):
    ckpt = load_checkpoint(cfg.checkpoint_path())
    setup = make_setup(cfg, ckpt)
    seeds = [cfg.seed + j for j in range(cfg.n_seeds)] if cfg.seed is not None else None
    t0 = time.perf_counter()
    results = evaluate(cfg, setup, seeds=seeds)
    wall = time.perf_counter() - t0
    write_results(cfg, results, seeds, cfg.out_dir, len(setup.probe.steps), timing={"wall_clock_s": wall})
    for v, res in results.items():
        m = summarize(res)
        print(f"{v}: success {m['success_rate']:.3f} return {m['normalized_return']:.1f} "
              f"diffusion steps {m['total_diffusion_steps']}")
    return results
