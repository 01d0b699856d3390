from .gradcheck import grad_check
from .optim import AdamState, ParameterStore, adam_step, xavier_uniform
from .tensor import (
    DegenerateMaskError,
    NumericError,
    ShapeError,
    Tensor,
    add,
    add_scalar,
    attention,
    cross_entropy,
    dropout,
    entry,
    gelu,
    grad_enabled,
    hcat,
    layer_norm,
    linear,
    log,
    masked_softmax,
    matmul,
    mul,
    no_grad,
    scale,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax,
    sub,
    sum_all,
    sum_rows,
    take_rows,
    transpose,
    vcat,
)

__all__ = [
    "AdamState",
    "DegenerateMaskError",
    "NumericError",
    "ParameterStore",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "add_scalar",
    "attention",
    "cross_entropy",
    "dropout",
    "entry",
    "gelu",
    "grad_check",
    "grad_enabled",
    "hcat",
    "layer_norm",
    "linear",
    "log",
    "masked_softmax",
    "matmul",
    "mul",
    "no_grad",
    "scale",
    "sigmoid",
    "slice_cols",
    "slice_rows",
    "softmax",
    "sub",
    "sum_all",
    "sum_rows",
    "take_rows",
    "transpose",
    "vcat",
    "xavier_uniform",
]
