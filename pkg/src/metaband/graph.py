"""Spatial-spectral band graph and its renormalized propagation matrix.

Vertices are spectral bands of one patch. Edge weights add an index-distance
kernel exp(-|i-j|/n_band) and a feature-distance kernel exp(-||xi-xj||/(h*w)),
then keep only the strongest edges: the truncation threshold is derived per
patch from an edge budget (strictly fewer than ``edge_budget`` undirected
edges survive), with ties broken by lexicographic band-index order. Self
loops enter only through the renormalization A~ = A + I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

EDGE_BUDGET = 1000


@dataclass
class BandGraph:
    adjacency: np.ndarray    # (n_band, n_band) symmetric, zero diagonal
    propagation: np.ndarray  # D~^{-1/2} (A + I) D~^{-1/2}
    threshold: float         # smallest kept edge weight (0 when nothing was cut)
    n_edges: int

    @property
    def n_band(self) -> int:
        return self.adjacency.shape[0]


def adjacency_spa(n_band: int) -> np.ndarray:
    """Index-proximity kernel exp(-|i-j|/n_band) with a zero diagonal."""
    if n_band < 2:
        raise ValidationError("adjacency needs at least 2 bands")
    idx = np.arange(n_band)
    dist = np.abs(idx[:, None] - idx[None, :])
    out = np.exp(-dist / n_band)
    np.fill_diagonal(out, 0.0)
    return out


def adjacency_spec(features: np.ndarray) -> np.ndarray:
    """Feature-distance kernel exp(-||xi-xj||_2/(h*w)) with a zero diagonal.

    ``features`` is the (n_band, h*w) matrix of flattened per-band patch pixels.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValidationError(f"feature matrix must be (n_band>=2, h*w), got {features.shape}")
    if not np.isfinite(features).all():
        raise ValidationError("feature matrix contains non-finite values")
    dist = _pairwise_distances(features[None])[0]
    out = np.exp(-dist / features.shape[1])
    np.fill_diagonal(out, 0.0)
    return out


def _pairwise_distances(stack: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows, batched over the leading axis."""
    gram = np.matmul(stack, stack.transpose(0, 2, 1))
    sq = np.einsum("bij,bij->bi", stack, stack)
    d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _truncate(weights: np.ndarray, edge_budget: int) -> tuple[np.ndarray, float, int]:
    """Keep the edge_budget-1 strongest upper-triangle edges (ties: lower (i,j) first)."""
    n = weights.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    vals = weights[iu, ju]
    keep = edge_budget - 1
    if vals.size <= keep:
        return weights.copy(), 0.0, vals.size
    # order: weight descending, then i ascending, then j ascending
    order = np.lexsort((ju, iu, -vals))[:keep]
    out = np.zeros_like(weights)
    out[iu[order], ju[order]] = vals[order]
    out += out.T
    return out, float(vals[order].min()), keep


def _renormalize(adjacency: np.ndarray) -> np.ndarray:
    tilde = adjacency + np.eye(adjacency.shape[0], dtype=adjacency.dtype)
    inv_sqrt = 1.0 / np.sqrt(tilde.sum(axis=1))
    return tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_graph(features: np.ndarray, edge_budget: int = EDGE_BUDGET,
                use_spatial: bool = True) -> BandGraph:
    """Build the band graph of one patch from its (n_band, h*w) feature matrix.

    ``use_spatial=False`` drops the index-proximity kernel, which makes the
    construction equivariant under band permutations (used by tests).
    """
    if edge_budget < 2:
        raise ValidationError("edge budget must allow at least one edge")
    features = np.asarray(features, dtype=np.float64)
    spec = adjacency_spec(features)
    weights = spec + adjacency_spa(features.shape[0]) if use_spatial else spec
    adjacency, threshold, n_edges = _truncate(weights, edge_budget)
    return BandGraph(adjacency, _renormalize(adjacency), threshold, n_edges)


def build_graph_stack(features: np.ndarray, edge_budget: int = EDGE_BUDGET,
                      use_spatial: bool = True) -> np.ndarray:
    """Propagation matrices for a (B, n_band, h*w) stack of patch features.

    Same construction as :func:`build_graph` applied per patch; returns the
    (B, n_band, n_band) array of propagation matrices in float64.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ValidationError(f"expected (B, n_band, h*w), got {features.shape}")
    b, n, hw = features.shape
    if n < 2:
        raise ValidationError("adjacency needs at least 2 bands")
    dist = _pairwise_distances(features)
    weights = np.exp(-dist / hw)
    diag = np.arange(n)
    weights[:, diag, diag] = 0.0
    if use_spatial:
        weights += adjacency_spa(n)[None]
        weights[:, diag, diag] = 0.0

    iu, ju = np.triu_indices(n, k=1)
    keep = edge_budget - 1
    out = np.empty((b, n, n), dtype=np.float64)
    for p in range(b):
        if iu.size <= keep:
            adjacency = weights[p]
        else:
            vals = weights[p, iu, ju]
            order = np.lexsort((ju, iu, -vals))[:keep]
            adjacency = np.zeros((n, n), dtype=np.float64)
            adjacency[iu[order], ju[order]] = vals[order]
            adjacency += adjacency.T
        out[p] = _renormalize(adjacency)
    return out
