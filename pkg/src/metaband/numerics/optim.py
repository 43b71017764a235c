"""SGD and Adam parameter updates.

Both update rules are deterministic functions of (params, grads, state).
``Adam`` keeps per-parameter moment buffers keyed by position so its state
can be checkpointed and replayed bit-exactly.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import Tensor


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """Plain gradient-descent update, returned as a new array."""
    param, grad = np.asarray(param), np.asarray(grad)
    if param.shape != grad.shape:
        raise ShapeError(f"sgd_step shapes disagree: {param.shape} vs {grad.shape}")
    if lr < 0:
        raise ValidationError("learning rate must be >= 0")
    return param - param.dtype.type(lr) * grad


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Adam update for step ``t`` (1-based); returns (param, m, v)."""
    if param.shape != grad.shape:
        raise ShapeError(f"adam_step shapes disagree: {param.shape} vs {grad.shape}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    out = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out.astype(param.dtype, copy=False), m, v


class SGD:
    """Stateless gradient descent over a fixed list of tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            p.data = sgd_step(p.data, p.grad.astype(p.dtype, copy=False), self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class Adam:
    """Adam over a fixed list of tensors, with a learning-rate decay hook.

    The update is a deterministic function of (params, grads, state): the
    replay contract (same grads + same state => bitwise-same params) holds.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, decay: float = 1.0):
        if lr <= 0:
            raise ValidationError("learning rate must be > 0")
        if not 0 < decay <= 1:
            raise ValidationError("decay factor must lie in (0, 1]")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.decay = float(decay)
        self.t = 0
        self.m = [np.zeros(p.shape, dtype=p.dtype) for p in self.params]
        self.v = [np.zeros(p.shape, dtype=p.dtype) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(p.dtype, copy=False)
            p.data, self.m[i], self.v[i] = adam_step(
                p.data, g, self.m[i], self.v[i], self.t, self.lr,
                self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def decay_lr(self) -> None:
        self.lr *= self.decay

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "decay": self.decay,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.decay = float(state["decay"])
        self.m = [np.asarray(a).copy() for a in state["m"]]
        self.v = [np.asarray(a).copy() for a in state["v"]]
