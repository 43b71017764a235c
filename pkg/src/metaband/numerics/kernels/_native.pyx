# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled data-movement kernels for the conv/pool hot paths.

Matrix products stay in BLAS on both backends; these loops only gather and
scatter patches, which is where the numpy fallback spends most of its time.
Rows are moved as contiguous runs (memcpy / pointer loops), and accumulation
order matches the numpy backend exactly so results are bit-identical across
backends.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(const real[:, :, :, ::1] x, int k, int pad):
    """Unfold (B,C,H,W) into (B, C*k*k, OH*OW) columns, stride 1."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = H + 2 * pad - k + 1
    cdef Py_ssize_t OW = W + 2 * pad - k + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((B, C * k * k, OH * OW), dtype=dtype)
    cdef real[:, :, ::1] cols = out
    cdef Py_ssize_t b, c, kh, kw, oh, row, ih, lo, hi
    with nogil:
        for b in range(B):
            for c in range(C):
                for kh in range(k):
                    for kw in range(k):
                        row = (c * k + kh) * k + kw
                        lo = pad - kw if pad - kw > 0 else 0
                        hi = W + pad - kw if W + pad - kw < OW else OW
                        if hi <= lo:
                            continue
                        for oh in range(OH):
                            ih = oh + kh - pad
                            if ih < 0 or ih >= H:
                                continue
                            memcpy(&cols[b, row, oh * OW + lo],
                                   &x[b, c, ih, lo + kw - pad],
                                   (hi - lo) * sizeof(real))
    return out


def col2im(const real[:, :, ::1] cols, int C, int H, int W, int k, int pad):
    """Fold (B, C*k*k, OH*OW) columns back onto a (B,C,H,W) grid, summing overlaps."""
    cdef Py_ssize_t B = cols.shape[0]
    cdef Py_ssize_t OH = H + 2 * pad - k + 1
    cdef Py_ssize_t OW = W + 2 * pad - k + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((B, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] x = out
    cdef const real *src
    cdef real *dst
    cdef Py_ssize_t b, c, kh, kw, oh, row, ih, lo, hi, i, n
    with nogil:
        for b in range(B):
            for c in range(C):
                for kh in range(k):
                    for kw in range(k):
                        row = (c * k + kh) * k + kw
                        lo = pad - kw if pad - kw > 0 else 0
                        hi = W + pad - kw if W + pad - kw < OW else OW
                        if hi <= lo:
                            continue
                        n = hi - lo
                        for oh in range(OH):
                            ih = oh + kh - pad
                            if ih < 0 or ih >= H:
                                continue
                            src = &cols[b, row, oh * OW + lo]
                            dst = &x[b, c, ih, lo + kw - pad]
                            for i in range(n):
                                dst[i] += src[i]
    return out


def maxpool2x2(const real[:, :, :, ::1] x):
    """2x2/stride-2 max pool; returns (out, argmax) with flat H*W plane indices.

    Ties resolve to the first maximum in row-major window order, matching the
    numpy backend.
    """
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t H2 = H // 2, W2 = W // 2
    dtype = np.float32 if real is float else np.float64
    out = np.empty((B, C, H2, W2), dtype=dtype)
    idx = np.empty((B, C, H2, W2), dtype=np.int64)
    cdef real[:, :, :, ::1] o = out
    cdef cnp.int64_t[:, :, :, ::1] ix = idx
    cdef Py_ssize_t b, c, i, j, r, s, best_r, best_s
    cdef real best, v
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(H2):
                    for j in range(W2):
                        best = x[b, c, 2 * i, 2 * j]
                        best_r = 2 * i
                        best_s = 2 * j
                        for r in range(2):
                            for s in range(2):
                                v = x[b, c, 2 * i + r, 2 * j + s]
                                if v > best:
                                    best = v
                                    best_r = 2 * i + r
                                    best_s = 2 * j + s
                        o[b, c, i, j] = best
                        ix[b, c, i, j] = best_r * W + best_s
    return out, idx


def maxpool2x2_backward(const real[:, :, :, ::1] grad, const cnp.int64_t[:, :, :, ::1] idx,
                        int H, int W):
    """Scatter pooled gradients back to the argmax positions."""
    cdef Py_ssize_t B = grad.shape[0], C = grad.shape[1]
    cdef Py_ssize_t H2 = grad.shape[2], W2 = grad.shape[3]
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((B, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, c, i, j
    cdef cnp.int64_t flat
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(H2):
                    for j in range(W2):
                        flat = idx[b, c, i, j]
                        dx[b, c, flat // W, flat % W] += grad[b, c, i, j]
    return out
