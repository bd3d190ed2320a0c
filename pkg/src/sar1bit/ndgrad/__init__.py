"""Minimal dense-tensor autodiff: primitives, backward pass, AdamW, tensor files."""

from .tensor import (
    NdgradError,
    NumericError,
    ShapeError,
    TapeError,
    Tape,
    Tensor,
    backward,
    grad_enabled,
    no_grad,
)
from .ops import (
    add,
    as_tensor,
    avg_pool,
    concat,
    conv2d,
    conv2d_transpose,
    exp,
    flatten,
    global_avg_pool,
    l2_norm,
    log,
    matmul,
    mean,
    mul,
    pairwise_distance,
    power_pos,
    reciprocal_pos,
    relu,
    reshape,
    scalar_mul,
    sigmoid,
    slice_,
    softmax,
    sqrt,
    square,
    sub,
    tsum,
)
from .optim import AdamW
from .init import kaiming_uniform, zeros
from .tensorfile import TensorFileError, load_tensor, pack_array, save_tensor, unpack_array

__all__ = [
    "AdamW",
    "NdgradError",
    "NumericError",
    "ShapeError",
    "TapeError",
    "Tape",
    "Tensor",
    "TensorFileError",
    "add",
    "as_tensor",
    "avg_pool",
    "backward",
    "concat",
    "conv2d",
    "conv2d_transpose",
    "exp",
    "flatten",
    "global_avg_pool",
    "grad_enabled",
    "kaiming_uniform",
    "l2_norm",
    "load_tensor",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "pack_array",
    "pairwise_distance",
    "power_pos",
    "reciprocal_pos",
    "relu",
    "reshape",
    "save_tensor",
    "scalar_mul",
    "sigmoid",
    "slice_",
    "softmax",
    "sqrt",
    "square",
    "sub",
    "tsum",
    "unpack_array",
    "zeros",
]
