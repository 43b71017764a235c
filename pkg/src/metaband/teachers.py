"""Band-selection teachers and their fusion into a supervision target.

Three lightweight stand-ins cover the classic method families: a greedy
relevance-minus-redundancy filter, a forward-selection wrapper scored by a
nearest-centroid classifier, and an embedding teacher that trains per-band
gates with an L1 penalty. Their votes fuse into a single binary target either
by popularity with randomized tie-breaking (the default), by set union, or by
averaging score vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import HsiDataset, f_statistics
from .errors import ValidationError
from .numerics import (
    Adam,
    Tensor,
    absolute,
    backward,
    binary_cross_entropy,
    matmul,
    mul,
    softmax_cross_entropy,
    tmean,
    zero_grads,
)
from .selector import binarize

TEACHER_KINDS = ("filter", "wrapper", "embedding")


@dataclass
class TeacherSelection:
    teacher_id: str
    dataset: str
    n_band: int
    bands: tuple[int, ...]                 # selected band indices, ascending
    scores: np.ndarray | None = None       # per-band score vector, when available

    def __post_init__(self):
        self.bands = tuple(sorted(int(b) for b in self.bands))
        if any(b < 0 or b >= self.n_band for b in self.bands):
            raise ValidationError(f"band index out of range for {self.n_band} bands")
        if len(set(self.bands)) != len(self.bands):
            raise ValidationError("teacher selected a band twice")

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.n_band, dtype=np.int64)
        out[list(self.bands)] = 1
        return out


@dataclass
class TeacherLabel:
    """Fused supervision vector; ``counts`` records the per-band vote totals."""
    vector: np.ndarray   # {0,1} of length n_band
    counts: np.ndarray   # votes per band
    seed: int | None = None

    @property
    def n_selected(self) -> int:
        return int(self.vector.sum())


def _spectra(dataset: HsiDataset, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat_labels = dataset.labels.reshape(-1)
    if np.any(flat_labels[indices] == 0):
        raise ValidationError("teacher training indices must be labeled pixels")
    x = dataset.cube.reshape(dataset.n_band, -1)[:, indices].T.astype(np.float64)
    return x, flat_labels[indices].astype(np.int64)


# -- filter teacher ---------------------------------------------------------------


def filter_teacher(dataset: HsiDataset, train_indices: np.ndarray,
                   n_sband: int) -> TeacherSelection:
    """Greedy selection by normalized label relevance (ANOVA F) minus mean
    absolute correlation with the bands already chosen. Deterministic.

    Correlations below the small-sample noise floor 2/sqrt(N) count as zero;
    otherwise chance-level correlations would outweigh the tiny relevance of
    uninformative bands and an exact duplicate could sneak in ahead of them.
    """
    if n_sband >= dataset.n_band:
        raise ValidationError(f"n_sband={n_sband} must be < n_band={dataset.n_band}")
    x, y = _spectra(dataset, train_indices)
    f = f_statistics(x, y)
    finite = f[np.isfinite(f)]
    cap = (finite.max() if finite.size and finite.max() > 0 else 1.0) * 10.0
    f = np.where(np.isfinite(f), f, cap)
    relevance = f / f.max() if f.max() > 0 else np.zeros_like(f)

    with np.errstate(invalid="ignore"):
        corr = np.corrcoef(x.T)
    corr = np.abs(np.nan_to_num(corr, nan=0.0))
    corr[corr < 2.0 / np.sqrt(len(y))] = 0.0

    selected = [int(np.argmax(relevance))]
    while len(selected) < n_sband:
        penalty = corr[:, selected].mean(axis=1)
        score = relevance - penalty
        score[selected] = -np.inf
        selected.append(int(np.argmax(score)))
    return TeacherSelection("filter", dataset.name, dataset.n_band, tuple(selected),
                            scores=relevance)


# -- wrapper teacher ---------------------------------------------------------------

_FIT_CAP = 512
_HOLDOUT_CAP = 256


def _centroid_accuracy(fit_x, fit_y, hold_x, hold_y, bands) -> float:
    classes = np.unique(fit_y)
    centroids = np.stack([fit_x[fit_y == c][:, bands].mean(axis=0) for c in classes])
    d = ((hold_x[:, bands][:, None, :] - centroids[None]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d, axis=1)]
    return float((pred == hold_y).mean())


def wrapper_teacher(dataset: HsiDataset, train_indices: np.ndarray, n_sband: int,
                    budget: int | None = None, seed: int = 0) -> TeacherSelection:
    """Greedy forward selection scored by nearest-centroid accuracy on a
    held-out subsample.

    ``budget`` caps the number of candidate-set evaluations; rounds subsample
    their candidates (seeded) when full greedy would exceed it. The default
    budget covers exhaustive greedy. ``n_sband == n_band`` degenerates to the
    full band set.
    """
    if n_sband > dataset.n_band:
        raise ValidationError(f"n_sband={n_sband} must be <= n_band={dataset.n_band}")
    if budget is None:
        budget = n_sband * dataset.n_band
    if budget < n_sband:
        raise ValidationError(f"budget {budget} cannot cover {n_sband} selection rounds")
    rng = np.random.default_rng(seed)
    x, y = _spectra(dataset, train_indices)
    perm = rng.permutation(len(y))
    n_hold = max(1, min(_HOLDOUT_CAP, len(y) // 3))
    hold, fit = perm[:n_hold], perm[n_hold:n_hold + _FIT_CAP]
    if fit.size == 0 or np.unique(y[fit]).size < 2:
        raise ValidationError("not enough labeled pixels to fit the wrapper teacher")

    per_round = max(1, budget // n_sband)
    selected: list[int] = []
    first_round_scores = np.zeros(dataset.n_band)
    for _ in range(n_sband):
        remaining = np.setdiff1d(np.arange(dataset.n_band), selected)
        if remaining.size > per_round:
            remaining = np.sort(rng.choice(remaining, size=per_round, replace=False))
        best_band, best_acc = int(remaining[0]), -1.0
        for band in remaining:
            acc = _centroid_accuracy(x[fit], y[fit], x[hold], y[hold],
                                     selected + [int(band)])
            if not selected:
                first_round_scores[band] = acc
            if acc > best_acc:
                best_band, best_acc = int(band), acc
        selected.append(best_band)
    return TeacherSelection("wrapper", dataset.name, dataset.n_band, tuple(selected),
                            scores=first_round_scores)


# -- embedding teacher ----------------------------------------------------------------


def embedding_teacher(dataset: HsiDataset, train_indices: np.ndarray, n_sband: int,
                      epochs: int = 30, seed: int = 0, l1_weight: float = 1e-3,
                      lr: float = 0.05, n_batch: int = 64) -> TeacherSelection:
    """Train per-band gates jointly with a linear classifier under an L1 gate
    penalty; the top gate magnitudes become the selection. Seeded."""
    if n_sband >= dataset.n_band:
        raise ValidationError(f"n_sband={n_sband} must be < n_band={dataset.n_band}")
    x, y = _spectra(dataset, train_indices)
    nb, nc = dataset.n_band, dataset.n_class
    rng = np.random.default_rng(seed)
    gates = Tensor(np.ones(nb), requires_grad=True, dtype=np.float64)
    bound = 1.0 / np.sqrt(nb)
    w = Tensor(rng.uniform(-bound, bound, (nb, nc)), requires_grad=True, dtype=np.float64)
    bias = Tensor(np.zeros(nc), requires_grad=True, dtype=np.float64)
    params = [gates, w, bias]
    opt = Adam(params, lr=lr)

    for epoch in range(epochs):
        order = rng.permutation(len(y))
        for lo in range(0, len(order), n_batch):
            rows = order[lo:lo + n_batch]
            gated = mul(Tensor(x[rows], dtype=np.float64), gates)
            logits = matmul(gated, w) + bias
            loss = softmax_cross_entropy(logits, y[rows]) + l1_weight * tmean(absolute(gates))
            if not np.isfinite(loss.item()):
                raise ValidationError(f"embedding teacher diverged at epoch {epoch}")
            zero_grads(params)
            backward(loss)
            opt.step()
    magnitude = np.abs(gates.data)
    bands = tuple(int(b) for b in binarize(magnitude, n_sband).selected())
    return TeacherSelection("embedding", dataset.name, nb, bands, scores=magnitude)


def run_teacher(kind: str, dataset: HsiDataset, train_indices: np.ndarray, n_sband: int,
                seed: int = 0, **kwargs) -> TeacherSelection:
    if kind == "filter":
        return filter_teacher(dataset, train_indices, n_sband)
    if kind == "wrapper":
        return wrapper_teacher(dataset, train_indices, n_sband, seed=seed, **kwargs)
    if kind == "embedding":
        return embedding_teacher(dataset, train_indices, n_sband, seed=seed, **kwargs)
    raise ValidationError(f"unknown teacher kind {kind!r}; choose from {TEACHER_KINDS}")


# -- fusion strategies --------------------------------------------------------------------


def _check_selections(selections: list[TeacherSelection]) -> int:
    if not selections:
        raise ValidationError("fusion needs at least one teacher selection")
    n_band = selections[0].n_band
    if any(s.n_band != n_band for s in selections):
        raise ValidationError("teacher selections disagree on the band count")
    return n_band


def vote_counts(selections: list[TeacherSelection]) -> np.ndarray:
    n_band = _check_selections(selections)
    counts = np.zeros(n_band, dtype=np.int64)
    for s in selections:
        counts += s.indicator()
    return counts


def diversity_ensemble(selections: list[TeacherSelection], n_sband: int,
                       seed: int = 0) -> TeacherLabel:
    """Pick bands by descending vote count; within the stratum that straddles
    the cutoff, sample uniformly without replacement (seeded). Exactly
    ``n_sband`` ones. No randomness is consumed when strata fit exactly."""
    counts = vote_counts(selections)
    if int((counts > 0).sum()) < n_sband:
        raise ValidationError(f"teachers voted for only {(counts > 0).sum()} bands; "
                              f"cannot fuse {n_sband}")
    vector = np.zeros(counts.size, dtype=np.uint8)
    need = n_sband
    rng = None
    for votes in range(int(counts.max()), 0, -1):
        stratum = np.flatnonzero(counts == votes)
        if stratum.size == 0:
            continue
        if stratum.size <= need:
            vector[stratum] = 1
            need -= stratum.size
        else:
            if rng is None:
                rng = np.random.default_rng(seed)
            vector[rng.choice(stratum, size=need, replace=False)] = 1
            need = 0
        if need == 0:
            break
    return TeacherLabel(vector, counts, seed)


def union_fusion(selections: list[TeacherSelection]) -> TeacherLabel:
    """Set union of all teacher selections (cardinality may exceed n_sband)."""
    counts = vote_counts(selections)
    return TeacherLabel((counts > 0).astype(np.uint8), counts, None)


def normalized_sum_fusion(selections: list[TeacherSelection], n_sband: int) -> TeacherLabel:
    """Average the per-teacher score vectors and keep the top ``n_sband``."""
    _check_selections(selections)
    if any(s.scores is None for s in selections):
        raise ValidationError("normalized-sum fusion needs per-teacher score vectors")
    mean_scores = np.mean([np.asarray(s.scores, dtype=np.float64) for s in selections], axis=0)
    mask = binarize(mean_scores, n_sband)
    return TeacherLabel(mask.mask.astype(np.uint8), vote_counts(selections), None)


def selection_loss(scores, label: TeacherLabel) -> Tensor:
    """Mean-reduced binary cross-entropy of the score vector against the vote."""
    target = label.vector if isinstance(label, TeacherLabel) else np.asarray(label)
    return binary_cross_entropy(scores, target.astype(np.float64))


# -- vote cache ---------------------------------------------------------------------------


def save_votes(selections: list[TeacherSelection], path: str | Path) -> None:
    """Cache as the documented mapping {teacher_id: [band indices]}."""
    _check_selections(selections)
    payload = {s.teacher_id: [int(b) for b in s.bands] for s in selections}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_votes(path: str | Path, dataset_name: str, n_band: int) -> list[TeacherSelection]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed vote cache {path}: {exc}") from exc
    if not isinstance(payload, dict) or not payload:
        raise ValidationError(f"vote cache {path} must map teacher ids to band lists")
    out = []
    for teacher_id, bands in payload.items():
        if not isinstance(bands, list):
            raise ValidationError(f"teacher {teacher_id!r} entry is not a band list")
        out.append(TeacherSelection(teacher_id, dataset_name, n_band, tuple(bands)))
    return out
