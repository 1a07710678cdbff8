"""
Dense tensors with reverse-mode automatic differentiation.
"""

from metaimpute.ndgrad.value import (
    Axis,
    Tensor,
    Value,
    as_value,
    backward,
    constant,
    elementwise,
    masked_reduce,
    matmul,
    parameter,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    softplus,
    square,
    transpose,
    zero_grad,
)

__all__ = [
    "Axis",
    "Tensor",
    "Value",
    "as_value",
    "backward",
    "constant",
    "elementwise",
    "masked_reduce",
    "matmul",
    "parameter",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "softplus",
    "square",
    "transpose",
    "zero_grad",
]
