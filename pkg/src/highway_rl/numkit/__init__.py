"""Minimal differentiable compute substrate: tape autodiff, optimizers, persistence."""

from .optim import SGD, Adam, make_optimizer
from .serialize import adopt_params, load_params, params_from_payload, params_payload, save_params
from .tape import (
    Param,
    Tape,
    Var,
    add,
    affine,
    check_finite,
    exp,
    gather,
    log,
    log_softmax,
    log_sum_exp,
    mean,
    mul,
    recurrent_step,
    relu,
    scale,
    shift,
    softmax,
    square,
    sub,
    tanh,
    total,
    uniform_init,
)

__all__ = [
    "Adam",
    "Param",
    "SGD",
    "Tape",
    "Var",
    "add",
    "adopt_params",
    "affine",
    "check_finite",
    "exp",
    "gather",
    "load_params",
    "log",
    "log_softmax",
    "log_sum_exp",
    "make_optimizer",
    "mean",
    "mul",
    "params_from_payload",
    "params_payload",
    "recurrent_step",
    "relu",
    "save_params",
    "scale",
    "shift",
    "softmax",
    "square",
    "sub",
    "tanh",
    "total",
    "uniform_init",
]
