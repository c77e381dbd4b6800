import numpy as np
import pytest

from replandiff import numkit as nk
from replandiff.numkit import Tape, Tensor
from replandiff.denoiser import DenoiserConfig, init_params
from replandiff.diffusion import DiffusionModel, make_schedule, training_loss


def tiny_model(H=8, D=2, W=16, L=2, E=8, N=16, seed=0, kind="cosine", stride=1, fourier=0):
    cfg = DenoiserConfig(H, D, W, L, E, fourier).validate()
    return DiffusionModel(make_schedule(N, kind), init_params(cfg, seed), cfg,
                          np.full(D, -1.0, np.float32), np.full(D, 1.0, np.float32), stride)


def overfit_one_sample(tau0, steps=1500, seed=0):
    """Tiny model trained on a single (8, 2) trajectory with a zero goal."""
    m = tiny_model(H=8, D=2, W=32, L=2, E=8, N=16, seed=seed)
    rng = nk.make_rng(seed, 3)
    state = nk.AdamState(lr=3e-3)
    params = m.params.list()
    batch = np.broadcast_to(tau0, (32,) + tau0.shape).copy()
    for _ in range(steps):
        with Tape() as tape:
            loss = training_loss(m, batch, rng, goals=np.zeros((32, 2), np.float32), pin_prob=0.0)
        nk.adam_step(params, tape.backward(loss, params), state)
    return m


@pytest.fixture
def model():
    return tiny_model()


def fd_check(fn, arrays, h=1e-3, seed=0):
    """Max relative error of tape gradients of sum(w * fn(*inputs)) against central differences (float64)."""
    with nk.precision(np.float64):
        rng = np.random.default_rng(seed)
        leaves = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
        with Tape() as tape:
            out = fn(*leaves)
            w = Tensor(rng.standard_normal(out.shape))
            loss = nk.sum_of_squares(nk.mul(out, w)) if out.data.size > 1 else out
            grads = tape.backward(loss, leaves)

        def f():
            o = fn(*leaves)
            return float(((o.data * w.data) ** 2).sum()) if o.data.size > 1 else o.data.item()

        worst = 0.0
        for leaf, g in zip(leaves, grads):
            base = leaf.data.copy()
            flat = base.reshape(-1)
            num = np.empty_like(flat)
            for k in range(flat.size):
                old = flat[k]
                flat[k] = old + h
                leaf.assign(base)
                fp = f()
                flat[k] = old - h
                leaf.assign(base)
                fm = f()
                flat[k] = old
                leaf.assign(base)
                num[k] = (fp - fm) / (2 * h)
            err = np.abs(num - g.reshape(-1)) / np.maximum(1.0, np.abs(num))
            worst = max(worst, float(err.max()))
        return worst
