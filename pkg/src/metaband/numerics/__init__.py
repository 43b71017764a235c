"""Differentiable tensor substrate: autodiff ops, optimizers, gradient checks."""

from .gradcheck import finite_difference_check, standard_suite
from .nn import (
    batch_norm,
    binary_cross_entropy,
    conv2d,
    dropout,
    maxpool2d,
    nll_from_probs,
    one_hot,
    softmax_cross_entropy,
)
from .optim import SGD, Adam, adam_step, sgd_step
from .tensor import (
    Tensor,
    absolute,
    add,
    as_tensor,
    backward,
    bmm,
    clip,
    constant,
    div,
    exp,
    log,
    matmul,
    mul,
    neg,
    parameter,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    tmean,
    transpose,
    tsum,
    zero_grads,
)
from .kernels import BACKEND as KERNEL_BACKEND

__all__ = [
    "Tensor", "backward", "zero_grads", "as_tensor", "constant", "parameter",
    "add", "sub", "mul", "div", "neg", "power", "exp", "log", "absolute", "clip",
    "tsum", "tmean", "reshape", "transpose", "matmul", "bmm",
    "relu", "sigmoid", "softmax",
    "conv2d", "maxpool2d", "batch_norm", "dropout", "one_hot",
    "softmax_cross_entropy", "nll_from_probs", "binary_cross_entropy",
    "SGD", "Adam", "sgd_step", "adam_step",
    "finite_difference_check", "standard_suite",
    "KERNEL_BACKEND",
]
