"""Dense tensors with tape-based reverse-mode differentiation.

Only the primitives below are differentiable; that is all the denoiser
needs. Operations record onto the innermost active :class:`Tape` whenever an
input requires a gradient, and the tape is replayed in reverse by
:meth:`Tape.backward`.

Data are float32 by default. ``with precision(np.float64):`` switches the
default for finite-difference checks.
"""

from __future__ import annotations

import contextlib
import contextvars
import math

import numpy as np

_dtype = contextvars.ContextVar("numkit_dtype", default=np.float32)
_tapes: contextvars.ContextVar = contextvars.ContextVar("numkit_tapes", default=())


class NumkitError(Exception):
    pass


class DimensionError(NumkitError, ValueError):
    pass


class NonFiniteError(NumkitError, ArithmeticError):
    pass


class ContractError(NumkitError, RuntimeError):
    pass


@contextlib.contextmanager
def precision(dtype):
    token = _dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype.reset(token)


def default_dtype():
    return _dtype.get()


class Tensor:
    """Immutable array value; ``grad`` is filled by :meth:`Tape.backward` for leaves."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=default_dtype(), copy=True)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr):
        t = cls.__new__(cls)
        arr.setflags(write=False)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def assign(self, arr):
        """Replace the value (optimizer updates); keeps identity for the tape."""
        arr = np.array(arr, dtype=self.data.dtype, copy=True)
        if arr.shape != self.data.shape:
            raise DimensionError(f"assign shape {arr.shape} != {self.data.shape}")
        arr.setflags(write=False)
        self.data = arr

    def __repr__(self):
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg})"

    # sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "inputs", "vjp", "kind")

    def __init__(self, kind, out, inputs, vjp):
        self.kind = kind
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Records primitive applications; single owner, not thread-shareable."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        self._token = _tapes.set(_tapes.get() + (self,))
        return self

    def __exit__(self, *exc):
        _tapes.reset(self._token)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss, params=None):
        """Reverse sweep from scalar ``loss``.

        Fills ``.grad`` on every requires_grad leaf reached (zeros for
        ``params`` the loss does not depend on), clears the tape and returns
        the gradients of ``params`` (or of all reached leaves) as a list /
        dict respectively.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        produced = {id(n.out) for n in self.nodes}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if key not in produced:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            leaf.grad = grads[key].astype(leaf.data.dtype, copy=False)
        self.nodes = []
        if params is None:
            return {leaf: leaf.grad for leaf in leaves.values()}
        out = []
        for p in params:
            if id(p) not in leaves:
                p.grad = np.zeros_like(p.data)
            out.append(p.grad)
        return out


def backward(loss, params=None, tape=None):
    tape = tape or (_tapes.get()[-1] if _tapes.get() else None)
    if tape is None:
        raise ContractError("backward called with no active tape")
    return tape.backward(loss, params)


def _record(kind, out_arr, inputs, vjp):
    if not np.isfinite(out_arr).all():
        raise NonFiniteError(f"{kind} produced non-finite values")
    out = Tensor._wrap(out_arr)
    tapes = _tapes.get()
    if tapes and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tapes[-1].nodes.append(_Node(kind, out, inputs, vjp))
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# -- primitives -----------------------------------------------------------------


def matmul(a, b):
    """Matrix product over the last two axes; leading batch axes follow numpy rules."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    A, B = a.data, b.data
    flat = B.ndim == 2 and A.ndim > 2  # shared weight: fold batch axes into rows

    def vjp(g):
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ B.T).reshape(A.shape) if a.requires_grad else None
            gb = A.reshape(-1, A.shape[-1]).T @ g2 if b.requires_grad else None
            return ga, gb
        ga = _unbroadcast(g @ np.swapaxes(B, -1, -2), A.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(A, -1, -2) @ g, B.shape) if b.requires_grad else None
        return ga, gb

    if flat:
        out = (A.reshape(-1, A.shape[-1]) @ B).reshape(A.shape[:-1] + (B.shape[-1],))
    else:
        out = A @ B
    return _record("matmul", out, (a, b), vjp)


def add(a, b):
    _check_broadcast("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", a.data + b.data, (a, b), vjp)


def mul(a, b):
    _check_broadcast("mul", a, b)
    A, B = a.data, b.data

    def vjp(g):
        ga = _unbroadcast(g * B, A.shape) if a.requires_grad else None
        gb = _unbroadcast(g * A, B.shape) if b.requires_grad else None
        return ga, gb

    return _record("mul", A * B, (a, b), vjp)


def scale(a, c):
    c = float(c)
    dt = a.data.dtype.type

    def vjp(g):
        return (g * dt(c),)

    return _record("scale", a.data * dt(c), (a,), vjp)


def concat(tensors, axis=-1):
    arrs = [t.data for t in tensors]
    try:
        out = np.concatenate(arrs, axis=axis)
    except ValueError:
        raise DimensionError(f"concat: shapes {[t.shape for t in tensors]} along axis {axis}") from None
    sizes = np.cumsum([x.shape[axis] for x in arrs])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _record("concat", out, tuple(tensors), vjp)


def slice_(a, key):
    """Basic (non-fancy) indexing."""
    out = a.data[key]
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[key] = g
        return (full,)

    return _record("slice", np.array(out), (a,), vjp)


def reshape(a, shape):
    shape = tuple(shape)
    if math.prod(shape) != a.size:
        raise DimensionError(f"reshape: {a.shape} -> {shape}")
    src = a.shape

    def vjp(g):
        return (g.reshape(src),)

    return _record("reshape", a.data.reshape(shape).copy(), (a,), vjp)


def mean(a):
    n = a.size
    shape = a.shape
    dt = a.data.dtype.type

    def vjp(g):
        return (np.full(shape, g.reshape(()) / dt(n), dtype=a.data.dtype),)

    return _record("mean", np.asarray(a.data.mean(dtype=np.float64), dtype=a.data.dtype), (a,), vjp)


def sum_of_squares(a):
    A = a.data

    def vjp(g):
        return (A * (2 * g.reshape(())),)

    return _record("sum_of_squares", np.asarray(np.sum(A.astype(np.float64) ** 2), dtype=A.dtype), (a,), vjp)


def mish(a):
    """x * tanh(softplus(x)).

    With n = exp(x), tanh(log(1 + n)) = n(n + 2) / (n(n + 2) + 2); inputs are
    clipped at 20 where both that ratio and the logistic are 1 in float32.
    """
    X = a.data
    n = np.exp(np.minimum(X, X.dtype.type(20)))
    nn2 = n * (n + 2)
    tsp = nn2 / (nn2 + 2)
    out = X * tsp

    def vjp(g):
        sig = n / (1 + n)
        return (g * (tsp + X * (1 - tsp * tsp) * sig),)

    return _record("mish", out, (a,), vjp)


def sinusoid(steps, dim):
    """Sinusoidal embedding: interleaved (sin, cos)(i / 10000^(2j/dim)); rows per step, no gradient."""
    if dim % 2:
        raise DimensionError(f"sinusoid embedding dim must be even, got {dim}")
    steps = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    freqs = 10000.0 ** (-(2.0 * np.arange(dim // 2)) / dim)
    ang = steps[:, None] * freqs[None, :]
    out = np.empty((steps.shape[0], dim), dtype=np.float64)
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return _record("sinusoid", out.astype(default_dtype()), (), lambda g: ())


def layer_norm_lite(x, gain, eps=1e-5):
    """Normalise over the last axis and multiply by a learned gain (no bias)."""
    if gain.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm_lite: gain {gain.shape} vs features {x.shape[-1]}")
    X, G = x.data, gain.data
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + X.dtype.type(eps))
    xhat = xc * rstd
    n = X.shape[-1]

    def vjp(g):
        gg = _unbroadcast(g * xhat, G.shape) if gain.requires_grad else None
        gx = None
        if x.requires_grad:
            gy = g * G
            gx = rstd * (gy - gy.mean(axis=-1, keepdims=True) - xhat * (gy * xhat).sum(axis=-1, keepdims=True) / n)
        return gx, gg

    return _record("layer_norm_lite", xhat * G, (x, gain), vjp)


def band_matmul(x, taps, dilation=1):
    """Per-channel banded Toeplitz product along axis -2.

    ``x`` is (..., H, C) and ``taps`` (K, C) with K odd; the result at row t is
    sum_j taps[j] * x[t + (j - K//2) * dilation] with zero padding, i.e. each
    channel is multiplied by its own H x H band matrix (non-zero only on
    diagonals that are multiples of ``dilation``) without materialising it.
    """
    X, T = x.data, taps.data
    if X.ndim < 2 or T.ndim != 2 or T.shape[1] != X.shape[-1] or T.shape[0] % 2 == 0 or dilation < 1:
        raise DimensionError(f"band_matmul: shapes {x.shape} and {taps.shape} do not conform")
    K, H, d = T.shape[0], X.shape[-2], int(dilation)
    half = (K // 2) * d
    pad = [(0, 0)] * X.ndim
    pad[-2] = (half, half)
    Xp = np.pad(X, pad)
    out = T[0] * Xp[..., 0:H, :]
    for j in range(1, K):
        out += T[j] * Xp[..., j * d : j * d + H, :]

    def vjp(g):
        gx = gt = None
        if x.requires_grad:
            gp = np.zeros(Xp.shape, dtype=g.dtype)
            for j in range(K):
                gp[..., j * d : j * d + H, :] += T[j] * g
            gx = gp[..., half : half + H, :]
        if taps.requires_grad:
            axes = tuple(range(X.ndim - 1))
            gt = np.stack([(g * Xp[..., j * d : j * d + H, :]).sum(axis=axes) for j in range(K)])
        return gx, gt

    return _record("band_matmul", out, (x, taps), vjp)


OPS = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "scale": scale,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "mean": mean,
    "sum_of_squares": sum_of_squares,
    "mish": mish,
    "sinusoid": sinusoid,
    "layer_norm_lite": layer_norm_lite,
    "band_matmul": band_matmul,
}


def forward_op(kind, *inputs, **kw):
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kw)
