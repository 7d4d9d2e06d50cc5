from .sparse import SparseMatrix
from .tensor import (
    GradientTape,
    Tensor,
    active_tape,
    add,
    backward,
    concat,
    count_parameters,
    exp,
    log,
    log_softmax_rows,
    matmul,
    mean,
    mean_rows,
    mul,
    parameter,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_rows,
    softplus,
    spmm,
    sub,
    take,
)
from .tensor import sum as sum_  # noqa: F401
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "GradientTape", "SparseMatrix", "Tensor", "active_tape", "adam_step", "add",
    "backward", "concat", "count_parameters", "exp", "log", "log_softmax_rows", "matmul", "mean",
    "mean_rows", "mul", "parameter", "relu", "reshape", "scale", "sigmoid", "softmax_rows",
    "softplus", "spmm", "sub", "sum_", "take",
]
