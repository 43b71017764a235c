"""Hyperspectral dataset container, splits, patch extraction, synthetic data.

A dataset is a band-major reflectance cube plus an integer label raster where
0 marks unlabeled background and classes run 1..n_class. Bands are min-max
normalized to [0,1] on load/generation; the normalization is idempotent, so
the ``.hsic`` container round-trips bit-exactly.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, GenerationError, ValidationError

DEFAULT_PATCH = 33


# -- container ----------------------------------------------------------------


@dataclass
class HsiDataset:
    name: str
    cube: np.ndarray    # (n_band, H, W) float32
    labels: np.ndarray  # (H, W), 0 = background
    n_class: int

    def __post_init__(self):
        self.cube = np.asarray(self.cube, dtype=np.float32)
        self.labels = np.asarray(self.labels)
        if self.cube.ndim != 3:
            raise ValidationError(f"cube must be (n_band, H, W), got {self.cube.shape}")
        if self.labels.shape != self.cube.shape[1:]:
            raise ValidationError(
                f"label raster {self.labels.shape} does not match cube {self.cube.shape[1:]}")
        if not np.isfinite(self.cube).all():
            raise ValidationError("cube contains non-finite values")
        present = np.unique(self.labels)
        present = present[present > 0]
        if present.size and present.max() > self.n_class:
            raise ValidationError(f"label {present.max()} exceeds n_class={self.n_class}")
        missing = set(range(1, self.n_class + 1)) - set(int(c) for c in present)
        if missing:
            raise ValidationError(f"classes with no labeled pixels: {sorted(missing)}")

    @property
    def n_band(self) -> int:
        return self.cube.shape[0]

    @property
    def height(self) -> int:
        return self.cube.shape[1]

    @property
    def width(self) -> int:
        return self.cube.shape[2]

    def labeled_indices(self) -> np.ndarray:
        """Flat (row*width + col) indices of all labeled pixels, ascending."""
        return np.flatnonzero(self.labels.reshape(-1) > 0)

    def class_counts(self) -> np.ndarray:
        counts = np.bincount(self.labels.reshape(-1), minlength=self.n_class + 1)
        return counts[1:]


def normalize_bands(cube: np.ndarray) -> np.ndarray:
    """Min-max normalize each band to [0,1]; constant bands become zero.

    Idempotent: a normalized band has min exactly 0 and max exactly 1, so a
    second pass reproduces it bit-for-bit.
    """
    cube = np.asarray(cube, dtype=np.float32)
    lo = cube.min(axis=(1, 2), keepdims=True)
    hi = cube.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.zeros_like(cube)
    np.divide(cube - lo, span, out=out, where=span > 0)
    return out


# -- .hsic container format ---------------------------------------------------

_HSIC_KEYS = ("name", "n_band", "height", "width", "n_class", "dtype", "layout")


def save(dataset: HsiDataset, path: str | Path) -> None:
    """Write the UTF-8 JSON header line, then the f32 cube and u16 labels."""
    header = {
        "name": dataset.name,
        "n_band": dataset.n_band,
        "height": dataset.height,
        "width": dataset.width,
        "n_class": dataset.n_class,
        "dtype": "f32",
        "layout": "band-major",
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(dataset.cube, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes())


def load(path: str | Path) -> HsiDataset:
    """Read a ``.hsic`` container; bands are normalized to [0,1] on the way in."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"malformed header in {path}: {exc}") from exc
    if not isinstance(header, dict) or set(header) != set(_HSIC_KEYS):
        raise DataFormatError(f"header must carry exactly the keys {_HSIC_KEYS}")
    if header["dtype"] != "f32":
        raise DataFormatError(f"unsupported dtype {header['dtype']!r}")
    if header["layout"] != "band-major":
        raise DataFormatError(f"unsupported layout {header['layout']!r}")
    nb, h, w = int(header["n_band"]), int(header["height"]), int(header["width"])
    if min(nb, h, w, int(header["n_class"])) <= 0:
        raise DataFormatError("header dimensions must be positive")
    expect = nb * h * w * 4 + h * w * 2
    if len(payload) != expect:
        raise DataFormatError(f"payload size mismatch: expected {expect} bytes, got {len(payload)}")
    cube = np.frombuffer(payload[:nb * h * w * 4], dtype="<f4").reshape(nb, h, w)
    labels = np.frombuffer(payload[nb * h * w * 4:], dtype="<u2").reshape(h, w)
    return HsiDataset(header["name"], normalize_bands(cube), labels.copy(),
                      int(header["n_class"]))


# -- splits ---------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Stratified train/test fractions plus the fixed 3:7 support:query split."""
    train_fraction: float
    support_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must lie in (0,1)")
        if not 0 < self.support_fraction < 1:
            raise ValidationError("support_fraction must lie in (0,1)")


@dataclass
class Split:
    support: np.ndarray
    query: np.ndarray
    test: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return np.concatenate([self.support, self.query])


def split(dataset: HsiDataset, spec: SplitSpec) -> Split:
    """Seed-deterministic stratified split into support/query/test pixel indices.

    Every class contributes at least one training pixel; the pooled training
    set is then cut support:query at ``support_fraction``.
    """
    rng = np.random.default_rng(spec.seed)
    flat = dataset.labels.reshape(-1)
    train_parts, test_parts = [], []
    for cls in range(1, dataset.n_class + 1):
        idx = np.flatnonzero(flat == cls)
        if idx.size < 2:
            raise ValidationError(
                f"class {cls} has {idx.size} labeled pixel(s); need >= 2 to stratify")
        perm = rng.permutation(idx)
        n_train = int(np.rint(spec.train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train = rng.permutation(np.concatenate(train_parts))
    n_support = int(np.rint(spec.support_fraction * train.size))
    return Split(support=np.sort(train[:n_support]),
                 query=np.sort(train[n_support:]),
                 test=np.sort(np.concatenate(test_parts)))


def stratified_subsample(dataset: HsiDataset, indices: np.ndarray, cap: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Proportional per-class subsample of ``indices`` with at least one pixel
    per class that is present; returns indices unchanged when under the cap."""
    if indices.size <= cap:
        return indices
    flat = dataset.labels.reshape(-1)
    labels = flat[indices]
    picked = []
    for cls in np.unique(labels):
        pool = indices[labels == cls]
        want = max(1, int(round(cap * pool.size / indices.size)))
        picked.append(rng.choice(pool, size=min(want, pool.size), replace=False))
    return np.sort(np.concatenate(picked))


# -- patches --------------------------------------------------------------------


@dataclass
class Patch:
    values: np.ndarray  # (n_band, h, w) float32
    center_label: int
    row: int
    col: int


def extract_window(dataset: HsiDataset, row: int, col: int,
                   h: int = DEFAULT_PATCH, w: int = DEFAULT_PATCH) -> np.ndarray:
    """Window centered at (row, col), zero-padded outside the image."""
    nb = dataset.n_band
    out = np.zeros((nb, h, w), dtype=np.float32)
    top, left = row - (h - 1) // 2, col - (w - 1) // 2
    r0, r1 = max(top, 0), min(top + h, dataset.height)
    c0, c1 = max(left, 0), min(left + w, dataset.width)
    if r0 < r1 and c0 < c1:
        out[:, r0 - top:r1 - top, c0 - left:c1 - left] = dataset.cube[:, r0:r1, c0:c1]
    return out


def extract_patch(dataset: HsiDataset, pixel: int | tuple[int, int],
                  h: int = DEFAULT_PATCH, w: int = DEFAULT_PATCH) -> Patch:
    """Labeled patch centered at a pixel given as flat index or (row, col)."""
    if isinstance(pixel, tuple):
        row, col = pixel
    else:
        row, col = divmod(int(pixel), dataset.width)
    label = int(dataset.labels[row, col])
    if label == 0:
        raise ValidationError(f"pixel ({row},{col}) is unlabeled background")
    return Patch(extract_window(dataset, row, col, h, w), label, row, col)


def extract_stack(dataset: HsiDataset, indices: np.ndarray,
                  h: int = DEFAULT_PATCH, w: int = DEFAULT_PATCH,
                  require_labels: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows for flat pixel indices into (B, n_band, h, w) plus labels."""
    indices = np.asarray(indices)
    out = np.empty((indices.size, dataset.n_band, h, w), dtype=np.float32)
    labels = np.empty(indices.size, dtype=np.int64)
    flat = dataset.labels.reshape(-1)
    for i, pix in enumerate(indices):
        row, col = divmod(int(pix), dataset.width)
        lab = int(flat[pix])
        if require_labels and lab == 0:
            raise ValidationError(f"pixel ({row},{col}) is unlabeled background")
        out[i] = extract_window(dataset, row, col, h, w)
        labels[i] = lab
    return out, labels


def batch_indices(indices: np.ndarray, n_batch: int, seed: int, epoch: int = 0) -> list[np.ndarray]:
    """Shuffle by seed+epoch and chop into batches, keeping the short tail."""
    if len(indices) == 0:
        raise ValidationError("batch_indices needs a nonempty index set")
    rng = np.random.default_rng(seed + epoch)
    order = rng.permutation(np.asarray(indices))
    return [order[i:i + n_batch] for i in range(0, len(order), n_batch)]


def batch_iter(dataset: HsiDataset, indices: np.ndarray, n_batch: int = 128,
               seed: int = 0, epoch: int = 0, patch: int = DEFAULT_PATCH):
    """Yield (patches, labels) batches, reshuffled per epoch, tail kept."""
    for chunk in batch_indices(indices, n_batch, seed, epoch):
        yield extract_stack(dataset, chunk, patch, patch)


# -- synthetic datasets -----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a planted-band dataset: smooth class regions, class-dependent
    levels on the informative bands, correlated copies on redundant bands, and
    pure noise elsewhere."""
    name: str
    n_band: int
    n_class: int
    height: int
    width: int
    informative_bands: tuple[int, ...]
    redundant_bands: dict[int, int] = field(default_factory=dict)
    noise_sigma: float = 0.08
    region_size: int = 160

    def __post_init__(self):
        bands = set(self.informative_bands)
        if not bands or not all(0 <= b < self.n_band for b in bands):
            raise ValidationError("informative_bands must be a nonempty subset of [0, n_band)")
        if len(bands) != len(self.informative_bands):
            raise ValidationError("informative_bands contains duplicates")
        for band, parent in self.redundant_bands.items():
            if band in bands:
                raise ValidationError(f"band {band} cannot be both informative and redundant")
            if parent not in bands:
                raise ValidationError(f"redundant band {band} must copy an informative parent")
            if not 0 <= band < self.n_band:
                raise ValidationError(f"redundant band {band} out of range")


def _grow_regions(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Randomized multi-source flood fill; every class seeds at least one region."""
    n_pix = spec.height * spec.width
    n_regions = max(spec.n_class, n_pix // spec.region_size)
    if n_pix < n_regions or n_pix < spec.n_class:
        raise GenerationError(
            f"{spec.n_class} classes / {n_regions} regions do not fit in {n_pix} pixels")
    seeds = rng.choice(n_pix, size=n_regions, replace=False)
    classes = np.concatenate([
        np.arange(1, spec.n_class + 1),
        rng.integers(1, spec.n_class + 1, size=n_regions - spec.n_class),
    ])
    labels = np.zeros(n_pix, dtype=np.uint16)
    w = spec.width
    heap: list[tuple[float, int, int, int]] = []
    counter = 0

    def push_neighbors(pix: int, cls: int) -> None:
        nonlocal counter
        row, col = divmod(pix, w)
        for nr, nc in ((row - 1, col), (row + 1, col), (row, col - 1), (row, col + 1)):
            if 0 <= nr < spec.height and 0 <= nc < w and not labels[nr * w + nc]:
                heapq.heappush(heap, (rng.random(), counter, nr * w + nc, cls))
                counter += 1

    # claim seeds up front so no class can be engulfed before it grows
    for pix, cls in zip(seeds, classes):
        labels[pix] = cls
    for pix, cls in zip(seeds, classes):
        push_neighbors(int(pix), int(cls))
    while heap:
        _, _, pix, cls = heapq.heappop(heap)
        if labels[pix]:
            continue
        labels[pix] = cls
        push_neighbors(pix, cls)
    return labels.reshape(spec.height, spec.width)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> HsiDataset:
    """Deterministic planted-band dataset; the informative set is recoverable
    by per-band ANOVA ranking."""
    rng = np.random.default_rng(seed)
    labels = _grow_regions(spec, rng)

    # class levels on informative bands: evenly spaced, class order shuffled per band
    levels = np.linspace(0.15, 0.85, spec.n_class)
    signal = np.empty((spec.n_band, spec.height, spec.width), dtype=np.float64)
    informative = sorted(spec.informative_bands)
    means = np.empty((spec.n_class, len(informative)))
    for i in range(len(informative)):
        means[:, i] = levels[rng.permutation(spec.n_class)]
    means += rng.uniform(-0.02, 0.02, size=means.shape)

    class_map = labels.astype(np.int64) - 1  # labels are 1-based, fully covered
    for i, band in enumerate(informative):
        signal[band] = means[:, i][class_map]
    for band in range(spec.n_band):
        if band in spec.informative_bands or band in spec.redundant_bands:
            continue
        signal[band] = rng.uniform(0.35, 0.65)
    for band in sorted(spec.redundant_bands):
        parent = spec.redundant_bands[band]
        scale = rng.uniform(0.5, 0.9)
        offset = rng.uniform(0.0, 0.2)
        signal[band] = offset + scale * signal[parent]

    if spec.noise_sigma > 0:
        signal = signal + rng.normal(0.0, spec.noise_sigma, size=signal.shape)
    return HsiDataset(spec.name, normalize_bands(signal), labels, spec.n_class)


# -- per-band statistics -----------------------------------------------------------


def band_f_statistics(dataset: HsiDataset) -> np.ndarray:
    """One-way ANOVA F statistic of each band against the labels."""
    flat = dataset.labels.reshape(-1)
    mask = flat > 0
    x = dataset.cube.reshape(dataset.n_band, -1)[:, mask].astype(np.float64)
    y = flat[mask]
    return f_statistics(x.T, y)


def f_statistics(samples: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """ANOVA F per column of ``samples`` (rows are observations)."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    n, k = samples.shape[0], classes.size
    if k < 2 or n <= k:
        raise ValidationError("F statistic needs >= 2 classes and more samples than classes")
    grand = samples.mean(axis=0)
    ssb = np.zeros(samples.shape[1])
    ssw = np.zeros(samples.shape[1])
    for cls in classes:
        grp = samples[labels == cls]
        mu = grp.mean(axis=0)
        ssb += grp.shape[0] * (mu - grand) ** 2
        ssw += ((grp - mu) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ssb / (k - 1)) / (ssw / (n - k))
    # zero within-class scatter: infinite separation if the means differ at all
    f = np.where(ssw > 0, f, np.where(ssb > 0, np.inf, 0.0))
    return f
