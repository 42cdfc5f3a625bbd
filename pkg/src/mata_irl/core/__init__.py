from .params import (
    AdamState,
    ParamStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    exp,
    leaky_relu,
    log,
    log_softmax_rows,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax_rows,
    sub,
    sum_,
    take,
    tanh,
    transpose,
)
from .gradcheck import numeric_grad, relative_error

__all__ = [
    "AdamState", "ParamStore", "Tape", "Tensor", "active_tape", "adam_step", "add",
    "as_tensor", "backward", "concat", "exp", "leaky_relu", "load_checkpoint", "log",
    "log_softmax_rows", "matmul", "mean", "mul", "numeric_grad", "relative_error",
    "relu", "reshape", "save_checkpoint", "sigmoid", "softmax_rows", "sub", "sum_",
    "take", "tanh", "transpose",
]
