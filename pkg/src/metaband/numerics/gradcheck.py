"""Finite-difference verification of reverse-mode gradients.

``finite_difference_check`` takes a graph builder (a zero-argument callable
that reads the current parameter data and returns a scalar loss) and compares
the autodiff gradient of every listed parameter against central differences.
Run it in double precision; float32 rounding swamps the h^2 truncation term.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ValidationError
from .tensor import Tensor, backward, zero_grads


def finite_difference_check(build_loss: Callable[[], Tensor], params: Sequence[Tensor],
                            h: float = 1e-4) -> float:
    """Max relative error between autodiff and central-difference gradients."""
    params = list(params)
    if not params:
        raise ValidationError("finite_difference_check needs at least one parameter")
    zero_grads(params)
    loss = build_loss()
    backward(loss)
    analytic = [np.zeros(p.shape, dtype=np.float64) if p.grad is None
                else p.grad.astype(np.float64).copy() for p in params]
    zero_grads(params)

    worst = 0.0
    for p, ad in zip(params, analytic):
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build_loss().item()
            flat[i] = orig - h
            down = build_loss().item()
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * h)
        ad_flat = ad.reshape(-1)
        scale = np.maximum(np.maximum(np.abs(fd), np.abs(ad_flat)), 1e-6)
        worst = max(worst, float(np.max(np.abs(fd - ad_flat) / scale)))
    return worst


def _spaced_values(rng: np.random.Generator, shape, step: float = 0.01,
                   dtype=np.float64) -> np.ndarray:
    """Random values with pairwise gaps >= step, keeping max/relu kinks away
    from the finite-difference stencil."""
    n = int(np.prod(shape))
    vals = (np.arange(1, n + 1, dtype=np.float64) * step)
    rng.shuffle(vals)
    return vals.reshape(shape).astype(dtype)


def standard_suite(seed: int = 0, h: float = 1e-4) -> dict[str, float]:
    """The fixed gradient-integrity battery: one entry per composed graph."""
    from . import nn
    from .tensor import bmm, matmul, mul, relu, sigmoid, tmean, tsum

    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True, dtype=np.float64)
    results["linear_sum"] = finite_difference_check(lambda: tsum(w * 2.0 + 1.0), [w], h)

    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True, dtype=np.float64)
    results["sigmoid_matmul"] = finite_difference_check(
        lambda: tsum(sigmoid(matmul(a, b))), [a, b], h)

    xb = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True, dtype=np.float64)
    yb = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True, dtype=np.float64)
    results["bmm"] = finite_difference_check(lambda: tmean(bmm(xb, yb) ** 2.0), [xb, yb], h)

    x = Tensor(_spaced_values(rng, (2, 2, 6, 6)), requires_grad=True)
    k = Tensor(rng.normal(size=(3, 2, 5, 5)) * 0.2, requires_grad=True, dtype=np.float64)
    labels = np.array([1, 3])

    def conv_graph():
        y = nn.maxpool2d(nn.conv2d(x, k, padding=2))
        logits = tsum(y, axis=(2, 3))
        return nn.softmax_cross_entropy(logits, labels)

    results["conv_pool_ce"] = finite_difference_check(conv_graph, [x, k], h)

    z = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
    scale = Tensor(rng.uniform(0.5, 1.5, size=(4,)), requires_grad=True, dtype=np.float64)
    shift = Tensor(rng.normal(size=(4,)) * 0.1, requires_grad=True, dtype=np.float64)
    results["batch_norm"] = finite_difference_check(
        lambda: tmean(relu(nn.batch_norm(z, scale, shift, axes=(0,))) ** 2.0),
        [z, scale, shift], h)

    p = Tensor(rng.uniform(0.2, 0.8, size=(6,)), requires_grad=True, dtype=np.float64)
    target = (rng.random(6) < 0.5).astype(np.float64)
    results["bce"] = finite_difference_check(
        lambda: nn.binary_cross_entropy(sigmoid(p * 2.0), target), [p], h)

    return results
