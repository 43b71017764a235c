"""Generalizable band scorer: two graph convolutions with basis-decomposed
kernels, a pooled-feature coefficient head, and top-k binarization.

Every learnable shape depends only on the patch pixel count and the hidden
width, never on the band count, which is what lets one parameter set score
datasets with different numbers of bands.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .graph import EDGE_BUDGET, BandGraph, build_graph_stack
from .numerics import Tensor, batch_norm, bmm, matmul, mul, relu, reshape, sigmoid, tmean

HIDDEN_WIDTH = 256
N_BASES = 3


@dataclass
class SelectorParams:
    """Shared bases + coefficient head + per-layer norm affinities."""
    bases1: list[Tensor]      # n_base tensors of shape (h*w, hidden)
    bases2: list[Tensor]      # n_base tensors of shape (hidden, 1)
    coeff_weights: Tensor     # (h*w, n_base)
    bn1_scale: Tensor         # (hidden,)
    bn1_shift: Tensor
    bn2_scale: Tensor         # (1,)
    bn2_shift: Tensor

    @classmethod
    def create(cls, patch_pixels: int, hidden: int = HIDDEN_WIDTH,
               n_base: int = N_BASES, seed: int = 0, dtype=np.float32) -> "SelectorParams":
        rng = np.random.default_rng(seed)
        b1 = 1.0 / np.sqrt(patch_pixels)
        b2 = 1.0 / np.sqrt(hidden)
        bases1 = [Tensor(rng.uniform(-b1, b1, (patch_pixels, hidden)), True, dtype)
                  for _ in range(n_base)]
        bases2 = [Tensor(rng.uniform(-b2, b2, (hidden, 1)), True, dtype)
                  for _ in range(n_base)]
        coeff = Tensor(rng.uniform(-b1, b1, (patch_pixels, n_base)), True, dtype)
        ones = lambda n: Tensor(np.ones(n), True, dtype)
        zeros = lambda n: Tensor(np.zeros(n), True, dtype)
        return cls(bases1, bases2, coeff, ones(hidden), zeros(hidden), ones(1), zeros(1))

    @property
    def n_base(self) -> int:
        return len(self.bases1)

    @property
    def patch_pixels(self) -> int:
        return self.coeff_weights.shape[0]

    @property
    def hidden(self) -> int:
        return self.bases1[0].shape[1]

    def named_tensors(self) -> dict[str, Tensor]:
        named = {}
        for i, t in enumerate(self.bases1):
            named[f"bases1_{i}"] = t
        for i, t in enumerate(self.bases2):
            named[f"bases2_{i}"] = t
        named["coeff_weights"] = self.coeff_weights
        named["bn1_scale"] = self.bn1_scale
        named["bn1_shift"] = self.bn1_shift
        named["bn2_scale"] = self.bn2_scale
        named["bn2_shift"] = self.bn2_shift
        return named

    def tensors(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def clone(self) -> "SelectorParams":
        return SelectorParams(
            [t.clone() for t in self.bases1],
            [t.clone() for t in self.bases2],
            self.coeff_weights.clone(),
            self.bn1_scale.clone(), self.bn1_shift.clone(),
            self.bn2_scale.clone(), self.bn2_shift.clone(),
        )

    def digest(self) -> str:
        """SHA-256 over all parameter bytes; detects any mutation."""
        h = hashlib.sha256()
        for name, t in sorted(self.named_tensors().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def coefficients(features, coeff_weights: Tensor) -> Tensor:
    """Per-patch basis coefficients: sigmoid of the band-pooled features
    through the coefficient head. (n_band, h*w) -> (n_base,)."""
    x = features if isinstance(features, Tensor) else Tensor(np.asarray(features),
                                                             dtype=coeff_weights.dtype)
    if x.ndim != 2 or x.shape[1] != coeff_weights.shape[0]:
        raise ShapeError(f"features {x.shape} do not match coefficient head "
                         f"{coeff_weights.shape}")
    pooled = tmean(x, axis=0, keepdims=True)          # (1, h*w)
    return reshape(sigmoid(matmul(pooled, coeff_weights)), (coeff_weights.shape[1],))


def combine_bases(bases: list[Tensor], alpha) -> Tensor:
    """Linear combination of basis kernels; ``alpha`` has one entry per basis."""
    alpha_t = alpha if isinstance(alpha, Tensor) else Tensor(np.asarray(alpha, dtype=np.float64),
                                                             dtype=bases[0].dtype)
    if alpha_t.data.size != len(bases):
        raise ShapeError(f"{alpha_t.data.size} coefficients for {len(bases)} bases")
    flat = reshape(alpha_t, (len(bases),))
    out = None
    for i, base in enumerate(bases):
        pick = np.zeros((len(bases), 1), dtype=base.dtype)
        pick[i, 0] = 1.0
        coef = reshape(matmul(reshape(flat, (1, len(bases))), Tensor(pick)), (1, 1))
        term = mul(base, coef)
        out = term if out is None else out + term
    return out


def _column(t: Tensor, i: int, n: int) -> Tensor:
    """Extract column i of a (B, n) tensor as (B, 1) using a one-hot matmul."""
    pick = np.zeros((n, 1), dtype=t.dtype)
    pick[i, 0] = 1.0
    return matmul(t, Tensor(pick))


def score_stack(x_stack: np.ndarray, p_stack: np.ndarray, params: SelectorParams) -> Tensor:
    """Per-patch band scores for a stack of patches.

    ``x_stack`` is (B, n_band, h*w) feature matrices, ``p_stack`` the matching
    (B, n_band, n_band) propagation matrices. Returns scores of shape
    (B, n_band), each strictly inside (0, 1).
    """
    dtype = params.coeff_weights.dtype
    b, n, hw = x_stack.shape
    if hw != params.patch_pixels:
        raise ShapeError(f"patch pixel count {hw} does not match parameters "
                         f"({params.patch_pixels})")
    if p_stack.shape != (b, n, n):
        raise ShapeError(f"propagation stack {p_stack.shape} does not match patches "
                         f"{x_stack.shape}")
    x = Tensor(np.asarray(x_stack), dtype=dtype)
    prop = Tensor(np.asarray(p_stack), dtype=dtype)
    hidden = params.hidden
    n_base = params.n_base

    alpha = sigmoid(matmul(tmean(x, axis=1), params.coeff_weights))  # (B, n_base)

    flat = reshape(x, (b * n, hw))
    mixed1 = None
    for i in range(n_base):
        term = reshape(matmul(flat, params.bases1[i]), (b, n, hidden))
        term = mul(term, reshape(_column(alpha, i, n_base), (b, 1, 1)))
        mixed1 = term if mixed1 is None else mixed1 + term
    h1 = relu(batch_norm(bmm(prop, mixed1), params.bn1_scale, params.bn1_shift, axes=(1,)))

    flat2 = reshape(h1, (b * n, hidden))
    mixed2 = None
    for i in range(n_base):
        term = reshape(matmul(flat2, params.bases2[i]), (b, n, 1))
        term = mul(term, reshape(_column(alpha, i, n_base), (b, 1, 1)))
        mixed2 = term if mixed2 is None else mixed2 + term
    raw = batch_norm(bmm(prop, mixed2), params.bn2_scale, params.bn2_shift, axes=(1,))
    return reshape(sigmoid(raw), (b, n))


def score_bands(features: np.ndarray, band_graph: BandGraph, params: SelectorParams) -> Tensor:
    """Band importance scores of a single patch, shape (n_band,), in (0, 1)."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got {features.shape}")
    if band_graph.n_band != features.shape[0]:
        raise ShapeError(f"graph has {band_graph.n_band} bands, features {features.shape[0]}")
    scores = score_stack(features[None], band_graph.propagation[None], params)
    return reshape(scores, (features.shape[0],))


def batch_scores(patches: np.ndarray, params: SelectorParams,
                 edge_budget: int = EDGE_BUDGET, use_spatial: bool = True) -> Tensor:
    """Mean of per-patch scores over a (B, n_band, h, w) batch -> (n_band,).

    Each patch gets its own graph; the batch's score vectors are averaged
    arithmetically (the per-batch mask downstream binarizes this mean).
    """
    patches = np.asarray(patches)
    if patches.ndim != 4:
        raise ShapeError(f"expected (B, n_band, h, w), got {patches.shape}")
    b, n, h, w = patches.shape
    feats = patches.reshape(b, n, h * w)
    props = build_graph_stack(feats, edge_budget, use_spatial)
    per_patch = score_stack(feats, props, params)
    return tmean(per_patch, axis=0)


@dataclass
class BandMask:
    mask: np.ndarray      # {0,1} vector of length n_band
    threshold: float      # the n_sband-th highest score
    n_sband: int

    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def binarize(scores, n_sband: int) -> BandMask:
    """Mask the ``n_sband`` highest-scoring bands with exact cardinality.

    Ties at the cutoff resolve to the lower band index, so the mask always
    carries exactly ``n_sband`` ones.
    """
    values = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    values = values.reshape(-1)
    if not 0 < n_sband < values.size:
        raise ValidationError(f"n_sband must lie in (0, {values.size}), got {n_sband}")
    order = np.lexsort((np.arange(values.size), -values))
    mask = np.zeros(values.size, dtype=np.uint8)
    mask[order[:n_sband]] = 1
    return BandMask(mask, float(values[order[n_sband - 1]]), n_sband)


def apply_mask(patch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out unselected bands of a (n_band,h,w) patch or (B,n_band,h,w) batch."""
    patch = np.asarray(patch)
    mask = np.asarray(mask.mask if isinstance(mask, BandMask) else mask)
    n = patch.shape[0] if patch.ndim == 3 else patch.shape[1]
    if mask.size != n:
        raise ShapeError(f"mask length {mask.size} does not match {n} bands")
    shaped = mask.astype(patch.dtype).reshape((n, 1, 1) if patch.ndim == 3 else (1, n, 1, 1))
    return patch * shaped


def subset_as_json(dataset_name: str, mask: BandMask, scores: np.ndarray) -> str:
    """Selected-band export: ascending indices plus the full score vector."""
    payload = {
        "dataset": dataset_name,
        "n_sband": int(mask.n_sband),
        "bands": [int(i) for i in mask.selected()],
        "scores": [float(s) for s in np.asarray(scores)],
    }
    return json.dumps(payload, indent=2)
