"""Pure-numpy fallback for the conv/pool data-movement kernels.

Semantics (including tie-breaking and accumulation order) are identical to
the compiled versions in ``_native.pyx``; the test suite asserts bitwise
parity between the two.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Unfold (B,C,H,W) into (B, C*k*k, OH*OW) columns, stride 1."""
    b, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B,C,OH,OW,k,k)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * k * k, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, c: int, h: int, w: int, k: int, pad: int) -> np.ndarray:
    """Fold (B, C*k*k, OH*OW) columns back onto a (B,C,H,W) grid, summing overlaps."""
    b = cols.shape[0]
    oh = h + 2 * pad - k + 1
    ow = w + 2 * pad - k + 1
    stacked = cols.reshape(b, c, k, k, oh, ow)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for kh in range(k):
        for kw in range(k):
            xp[:, :, kh:kh + oh, kw:kw + ow] += stacked[:, :, kh, kw]
    return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool; returns (out, argmax) with flat H*W plane indices."""
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, :, :h2 * 2, :w2 * 2].reshape(b, c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    flat = np.argmax(win, axis=-1)  # first max wins on ties
    out = np.take_along_axis(win, flat[..., None], axis=-1)[..., 0]
    rows = 2 * np.arange(h2)[None, None, :, None] + flat // 2
    cols = 2 * np.arange(w2)[None, None, None, :] + flat % 2
    return np.ascontiguousarray(out), (rows * w + cols).astype(np.int64)


def maxpool2x2_backward(grad: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Scatter pooled gradients back to the argmax positions."""
    b, c = grad.shape[:2]
    out = np.zeros((b, c, h * w), dtype=grad.dtype)
    bb = np.arange(b)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    # argmax positions are unique per output cell, so plain assignment is safe
    out[bb, cc, idx] = grad
    return out.reshape(b, c, h, w)
