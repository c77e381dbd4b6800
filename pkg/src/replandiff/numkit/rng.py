"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *path)`` so that, e.g.,
episode 17 of seed 3 draws the same numbers no matter how episodes are
scheduled across workers.
"""

import numpy as np


def make_rng(seed, *path):
    ss = np.random.SeedSequence([int(seed), *(int(p) for p in path)])
    return np.random.Generator(np.random.Philox(ss))
