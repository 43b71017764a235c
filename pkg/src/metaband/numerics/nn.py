"""Network-level operations: convolution, pooling, normalization, losses.

conv2d gathers patches through the kernel backend (compiled extension when
available) and leaves the contraction to BLAS. Batches are processed in
fixed-size chunks so the unfolded column buffer stays bounded; the chunk size
is constant, which keeps accumulation order — and therefore results —
deterministic.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, ValidationError
from . import kernels
from .tensor import (
    Tensor,
    _make,
    as_tensor,
    clip,
    exp,
    log,
    mul,
    tmean,
    tsum,
)

# patches per im2col chunk; bounds the column buffer to a few tens of MB
_CONV_CHUNK = 32


def conv2d(x: Tensor, weight: Tensor, padding: int = 2) -> Tensor:
    """Bias-free cross-correlation with zero padding, stride 1.

    ``x`` is (C,H,W) for a single patch or (B,C,H,W) for a batch; ``weight``
    is (C_out, C_in, k, k). Output spatial size is H+2p-k+1 (equal to the
    input for k=5, p=2).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    single = x.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects (B,C,H,W) and (Co,Ci,k,k), got {x.shape}, {weight.shape}")
    b, c, h, w = x.shape
    c_out, c_in, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError(f"conv2d kernels must be square, got {kh}x{kw}")
    if c != c_in:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernels expect {c_in}")
    k = kh
    oh = h + 2 * padding - k + 1
    ow = w + 2 * padding - k + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}, kernel {k}, pad {padding}")

    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = np.empty((b, c_out, oh * ow), dtype=x.dtype)
    for lo in range(0, b, _CONV_CHUNK):
        hi = min(lo + _CONV_CHUNK, b)
        cols = kernels.im2col(x.data[lo:hi], k, padding)
        np.matmul(wmat[None], cols, out=out[lo:hi])
    out = out.reshape(b, c_out, oh, ow)

    def vjp(g):
        g3 = g.reshape(b, c_out, oh * ow)
        dw = np.zeros_like(wmat)
        dx = np.empty((b, c, h, w), dtype=x.dtype)
        for lo in range(0, b, _CONV_CHUNK):
            hi = min(lo + _CONV_CHUNK, b)
            cols = kernels.im2col(x.data[lo:hi], k, padding)
            dw += np.tensordot(g3[lo:hi], cols, axes=([0, 2], [0, 2]))
            dcols = np.matmul(wmat.T[None], g3[lo:hi])
            dx[lo:hi] = kernels.col2im(np.ascontiguousarray(dcols), c, h, w, k, padding)
        return dx, dw.reshape(weight.shape)

    result = _make(out, (x, weight), vjp)
    return result.reshape(result.shape[1:]) if single else result


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """2x2/stride-2 max pooling with floor semantics (odd trailing row/col dropped).

    Gradient routes to the argmax element of each window; ties go to the
    first maximum in row-major window order.
    """
    if window != 2 or stride != 2:
        raise ValidationError("maxpool2d supports window=2, stride=2 only")
    x = as_tensor(x)
    single = x.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects (B,C,H,W) or (C,H,W), got {x.shape}")
    b, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2d needs H,W >= 2, got {h}x{w}")
    out, idx = kernels.maxpool2x2(x.data)

    def vjp(g):
        return (kernels.maxpool2x2_backward(np.ascontiguousarray(g), idx, h, w),)

    result = _make(out, (x,), vjp)
    return result.reshape(result.shape[1:]) if single else result


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor, axes: tuple[int, ...],
               eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along ``axes``, then scale and shift.

    Always uses the statistics of the tensor at hand (no running averages), in
    training and inference alike. ``scale``/``shift`` must broadcast against
    the normalized tensor.
    """
    x = as_tensor(x)
    axes = tuple(ax % x.ndim for ax in axes)
    count = int(np.prod([x.shape[ax] for ax in axes]))
    if count < 2:
        raise ValidationError(f"batch_norm needs >= 2 elements along axes {axes}, got {count}")
    mu = tmean(x, axis=axes, keepdims=True)
    centered = x - mu
    var = tmean(mul(centered, centered), axis=axes, keepdims=True)
    inv = (var + eps) ** -0.5
    return mul(centered, inv) * scale + shift


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p <= 0.0:
        return x
    x = as_tensor(x)
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return mul(x, Tensor(keep))


def one_hot(labels: np.ndarray, n_class: int, dtype=np.float32) -> np.ndarray:
    """Encode 1-based class labels as one-hot rows."""
    labels = np.asarray(labels)
    out = np.zeros((labels.size, n_class), dtype=dtype)
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


def _check_labels(labels: np.ndarray, n_class: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("loss needs at least one label")
    if labels.min() < 1 or labels.max() > n_class:
        raise ValidationError(f"labels must lie in [1..{n_class}], got range "
                              f"[{labels.min()}..{labels.max()}]")
    return labels.astype(np.int64)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax probability of the true class.

    ``labels`` are 1-based class indices.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (B,C) logits, got {logits.shape}")
    b, c = logits.shape
    labels = _check_labels(labels, c)
    # shifting by a detached row max leaves both value and gradient unchanged
    shifted = logits - Tensor(logits.data.max(axis=1, keepdims=True))
    lse = log(tsum(exp(shifted), axis=1))
    true_logit = tsum(mul(shifted, Tensor(one_hot(labels, c, logits.dtype))), axis=1)
    return tmean(lse - true_logit)


def nll_from_probs(probs: Tensor, labels: np.ndarray, eps: float = 1e-12) -> Tensor:
    """Mean negative log-likelihood given probability rows (1-based labels)."""
    probs = as_tensor(probs)
    if probs.ndim != 2:
        raise ShapeError(f"nll_from_probs expects (B,C) probabilities, got {probs.shape}")
    b, c = probs.shape
    labels = _check_labels(labels, c)
    picked = tsum(mul(probs, Tensor(one_hot(labels, c, probs.dtype))), axis=1)
    return -tmean(log(clip(picked, eps, 1.0)))


def binary_cross_entropy(pred: Tensor, target: np.ndarray, eps: float = 1e-7) -> Tensor:
    """Mean-reduced BCE of predictions in (0,1) against a {0,1} target vector."""
    pred = as_tensor(pred)
    target = np.asarray(target)
    if target.shape != pred.shape:
        raise ShapeError(f"binary_cross_entropy shapes disagree: {pred.shape} vs {target.shape}")
    if not np.isin(target, (0, 1)).all():
        raise ValidationError("binary_cross_entropy target must be exactly 0/1")
    t = Tensor(target.astype(pred.dtype))
    p = clip(pred, eps, 1.0 - eps)
    return -tmean(mul(t, log(p)) + mul(1.0 - t, log(1.0 - p)))
