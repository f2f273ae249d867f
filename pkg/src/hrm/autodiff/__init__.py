from .nn import dropout, layer_norm, linear, lstm_step, one_hot, softmax, straight_through
from .optim import OptimizerState, adam_update, clip_grad_norm
from .params import ParameterSet, glorot, load_checkpoint, save_checkpoint
from .tensor import (
    NonFiniteError,
    Tensor,
    backward,
    concat,
    exp,
    forward_backward,
    gather_last,
    log,
    matmul,
    no_grad,
    record_stop_gradients,
    replay_stop_gradients,
    sigmoid,
    sqrt,
    stack,
    stop_gradient,
    take_rows,
    tanh,
    where,
)

__all__ = [
    "NonFiniteError", "OptimizerState", "ParameterSet", "Tensor", "adam_update", "backward",
    "clip_grad_norm", "concat", "dropout", "exp", "forward_backward", "gather_last", "glorot",
    "layer_norm", "linear", "load_checkpoint", "log", "lstm_step", "matmul", "no_grad", "one_hot",
    "record_stop_gradients", "replay_stop_gradients", "save_checkpoint", "sigmoid", "softmax",
    "sqrt", "stack", "stop_gradient", "straight_through", "take_rows", "tanh", "where",
]
