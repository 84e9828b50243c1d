"""Reverse-mode autodiff engine: tensors, NN primitives, AdamW, checkpoints."""

from .checkpoint import BadMagic, TruncatedFile, load_checkpoint, save_checkpoint
from .conv import BadGroupCount, conv, conv_output_shape, group_norm, init_conv_weight
from .optim import GradCheckReport, OptimState, PlateauScheduler, adamw_step, grad_check
from .tensor import (
    ShapeMismatch,
    Tape,
    Tensor,
    add,
    concat,
    div,
    dropout,
    gelu,
    linear,
    masked_select,
    matmul,
    mul,
    narrow,
    power,
    reshape,
    sigmoid,
    silu,
    sqrt,
    sub,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose2,
)

__all__ = [
    "BadGroupCount", "BadMagic", "GradCheckReport", "OptimState",
    "PlateauScheduler", "ShapeMismatch", "Tape", "Tensor", "TruncatedFile",
    "adamw_step", "add", "concat", "conv", "conv_output_shape", "div",
    "dropout", "gelu", "grad_check", "group_norm", "init_conv_weight",
    "linear", "load_checkpoint", "masked_select", "matmul", "mul", "narrow",
    "power", "reshape", "save_checkpoint", "sigmoid", "silu", "sqrt", "sub",
    "tanh", "tensor_mean", "tensor_sum", "transpose2",
]
