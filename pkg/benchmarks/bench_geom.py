"""Compare the compiled and pure-Python collision kernels on random plans.

    python benchmarks/bench_geom.py --world maze12 --plans 2000
"""

import argparse
import time

import numpy as np

from replandiff import _geom_py
from replandiff.envs import load_world

try:
    from replandiff import _geom_ext
except ImportError:
    _geom_ext = None


def random_plans(world, n, H, rng):
    nr, nc = world.shape
    cs = world.cell_size
    lo = np.array([cs, cs])
    hi = np.array([(nc - 1) * cs, (nr - 1) * cs])
    steps = rng.normal(0.0, 0.15 * cs, size=(n, H, 2))
    start = rng.uniform(lo, hi, size=(n, 1, 2))
    return np.ascontiguousarray(np.clip(start + np.cumsum(steps, axis=1), lo, hi))


def time_backend(mod, blocked, plans, cell, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = [mod.first_violation(blocked, p, cell) for p in plans]
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--world", default="maze12")
    ap.add_argument("--plans", type=int, default=2000)
    ap.add_argument("--horizon", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    world = load_world(args.world)
    blocked = np.ascontiguousarray(world.walls, dtype=np.uint8)
    plans = random_plans(world, args.plans, args.horizon, np.random.default_rng(args.seed))
    n_seg = args.plans * (args.horizon - 1)

    t_py, out_py = time_backend(_geom_py, blocked, plans, world.cell_size, args.repeat)
    print(f"python  {t_py:8.4f}s  {1e6 * t_py / n_seg:8.3f} us/segment")
    if _geom_ext is None:
        print("cython  not built")
        return 0
    t_cy, out_cy = time_backend(_geom_ext, blocked, plans, world.cell_size, args.repeat)
    print(f"cython  {t_cy:8.4f}s  {1e6 * t_cy / n_seg:8.3f} us/segment")
    print(f"speedup {t_py / t_cy:.1f}x, outputs agree: {out_py == out_cy}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
