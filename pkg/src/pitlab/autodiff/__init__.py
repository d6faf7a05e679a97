"""Minimal reverse-mode autodiff over dense float64 tensors."""

from .checkpoint import load_tensors, save_tensors
from .optim import Adam, PlateauScheduler, clip_global_norm, global_grad_norm, plateau_scheduler, zero_grad
from .tensor import (
    Tensor,
    add,
    backward,
    broadcast_to,
    concat,
    div,
    dot,
    exp,
    is_grad_enabled,
    log10,
    matmul,
    mean,
    mul,
    no_grad,
    overlap_add,
    power,
    relu,
    reshape,
    sigmoid,
    slice_,
    sqrt,
    stack,
    sub,
    sum_,
    tanh,
    tensor,
    transpose,
)

__all__ = [
    "Adam", "PlateauScheduler", "Tensor", "add", "backward", "broadcast_to",
    "clip_global_norm", "concat", "div", "dot", "exp", "global_grad_norm",
    "is_grad_enabled", "load_tensors", "log10", "matmul", "mean", "mul",
    "no_grad", "overlap_add", "plateau_scheduler", "power", "relu", "reshape",
    "save_tensors", "sigmoid", "slice_", "sqrt", "stack", "sub", "sum_", "tanh",
    "tensor", "transpose", "zero_grad",
]
