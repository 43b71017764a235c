"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always available. Set ``METABAND_KERNELS=numpy`` or
``METABAND_KERNELS=native`` to force a backend (``native`` raises if the
extension is missing).
"""

import importlib
import os

import numpy as np

from . import numpy_backend

_REQUESTED = os.environ.get("METABAND_KERNELS", "auto")
if _REQUESTED not in ("auto", "native", "numpy"):
    raise ValueError(f"METABAND_KERNELS must be auto|native|numpy, got {_REQUESTED!r}")

_native = None
if _REQUESTED in ("auto", "native"):
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError:
        if _REQUESTED == "native":
            raise
        _native = None

BACKEND = "native" if _native is not None else "numpy"


def _contig(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x)


if _native is not None:

    def im2col(x, k, pad):
        return _native.im2col(_contig(x), k, pad)

    def col2im(cols, c, h, w, k, pad):
        return _native.col2im(_contig(cols), c, h, w, k, pad)

    def maxpool2x2(x):
        return _native.maxpool2x2(_contig(x))

    def maxpool2x2_backward(grad, idx, h, w):
        return _native.maxpool2x2_backward(_contig(grad), _contig(idx), h, w)

else:
    im2col = numpy_backend.im2col
    col2im = numpy_backend.col2im
    maxpool2x2 = numpy_backend.maxpool2x2
    maxpool2x2_backward = numpy_backend.maxpool2x2_backward
