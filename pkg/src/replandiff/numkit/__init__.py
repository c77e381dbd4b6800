"""Small float32 tensor core: primitives, tape autodiff, Adam, seeded streams."""

from .adam import AdamState, adam_step
from .rng import make_rng
from .tensor import (
    OPS,
    ContractError,
    DimensionError,
    NonFiniteError,
    NumkitError,
    Tape,
    Tensor,
    add,
    band_matmul,
    as_tensor,
    backward,
    concat,
    default_dtype,
    forward_op,
    layer_norm_lite,
    matmul,
    mean,
    mish,
    mul,
    precision,
    reshape,
    scale,
    sinusoid,
    slice_,
    sum_of_squares,
)

__all__ = [
    "OPS",
    "AdamState",
    "ContractError",
    "DimensionError",
    "NonFiniteError",
    "NumkitError",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "band_matmul",
    "as_tensor",
    "backward",
    "concat",
    "default_dtype",
    "forward_op",
    "layer_norm_lite",
    "make_rng",
    "matmul",
    "mean",
    "mish",
    "mul",
    "precision",
    "reshape",
    "scale",
    "sinusoid",
    "slice_",
    "sum_of_squares",
]
