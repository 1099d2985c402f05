"""Minimal float64 tensor engine with reverse-mode autodiff."""

from .functional import adaptive_avg_pool, conv, norm_layer, transpose_conv
from .module import Module, uniform_init
from .optim import Adam, AdamState, adam_step
from .tensor import (
    NonFiniteWarning,
    Tensor,
    as_tensor,
    backward,
    concat,
    custom_op,
    elementwise,
    matmul,
    no_grad,
    relu,
    sigmoid,
    tanh,
    topological_order,
    zeros,
)

__all__ = [
    "Adam",
    "AdamState",
    "Module",
    "NonFiniteWarning",
    "Tensor",
    "adam_step",
    "adaptive_avg_pool",
    "as_tensor",
    "backward",
    "concat",
    "conv",
    "custom_op",
    "elementwise",
    "matmul",
    "no_grad",
    "norm_layer",
    "relu",
    "sigmoid",
    "tanh",
    "topological_order",
    "transpose_conv",
    "uniform_init",
    "zeros",
]
