"""Per-dataset CNN evaluating band-masked patches.

The full profile stacks five ConvBNReLU(5x5, pad 2) + 2x2-maxpool stages with
channel widths 64/128/256/512/1024, flattens, and finishes with dropout, a
fully-connected layer, and a softmax. The resolution chain for 33x33 input is
33 -> 16 -> 8 -> 4 -> 2 -> 1. The "desk" profile keeps the same stage recipe
but uses two stages (16, 32 channels) and a global average pool so CPU test
budgets stay sane.

Stage 1 always takes the dataset's full band count: masked-out bands arrive
as zero channels, so one classifier instance stays valid while the mask moves
during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .numerics import (
    Tensor,
    batch_norm,
    conv2d,
    dropout,
    matmul,
    maxpool2d,
    nll_from_probs,
    relu,
    reshape,
    softmax,
    tmean,
)

PROFILES = {
    "table1": (64, 128, 256, 512, 1024),
    "desk": (16, 32),
}
KERNEL_SIZE = 5
PADDING = 2
DROPOUT_RATE = 0.5


@dataclass
class ConvStage:
    kernels: Tensor   # (C_out, C_in, 5, 5)
    bn_scale: Tensor  # (C_out,)
    bn_shift: Tensor


@dataclass
class ClassifierParams:
    stages: list[ConvStage]
    fc_weight: Tensor
    fc_bias: Tensor
    profile: str
    in_bands: int
    n_class: int
    patch: int
    global_pool: bool
    dropout_rate: float = DROPOUT_RATE

    @classmethod
    def create(cls, in_bands: int, n_class: int, profile: str = "table1",
               patch: int = 33, seed: int = 0, dtype=np.float32,
               channels: tuple[int, ...] | None = None) -> "ClassifierParams":
        if profile not in PROFILES:
            raise ValidationError(f"unknown classifier profile {profile!r}")
        channels = PROFILES[profile] if channels is None else channels
        global_pool = profile == "desk"
        rng = np.random.default_rng(seed)
        stages = []
        c_in, side = in_bands, patch
        for c_out in channels:
            bound = 1.0 / np.sqrt(c_in * KERNEL_SIZE * KERNEL_SIZE)
            stages.append(ConvStage(
                Tensor(rng.uniform(-bound, bound, (c_out, c_in, KERNEL_SIZE, KERNEL_SIZE)),
                       True, dtype),
                Tensor(np.ones(c_out), True, dtype),
                Tensor(np.zeros(c_out), True, dtype),
            ))
            c_in = c_out
            side //= 2
            if side < 1:
                raise ValidationError(f"patch {patch} too small for {len(channels)} pool stages")
        feat = channels[-1] if global_pool else channels[-1] * side * side
        bound = 1.0 / np.sqrt(feat)
        fc_w = Tensor(rng.uniform(-bound, bound, (feat, n_class)), True, dtype)
        fc_b = Tensor(np.zeros(n_class), True, dtype)
        return cls(stages, fc_w, fc_b, profile, in_bands, n_class, patch, global_pool)

    def named_tensors(self) -> dict[str, Tensor]:
        named = {}
        for i, st in enumerate(self.stages):
            named[f"stage{i}_kernels"] = st.kernels
            named[f"stage{i}_bn_scale"] = st.bn_scale
            named[f"stage{i}_bn_shift"] = st.bn_shift
        named["fc_weight"] = self.fc_weight
        named["fc_bias"] = self.fc_bias
        return named

    def tensors(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for name, t in sorted(self.named_tensors().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def classify(patches: np.ndarray | Tensor, params: ClassifierParams,
             train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Class probability rows for a (B, n_band, h, w) batch (or single patch).

    Dropout fires only in ``train_mode`` and then needs ``rng``. Batch norm
    uses the statistics of the batch at hand in both modes.
    """
    x = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches),
                                                           dtype=params.fc_weight.dtype)
    if x.ndim == 3:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"expected (B, n_band, h, w), got {x.shape}")
    if x.shape[1] != params.in_bands:
        raise ShapeError(f"classifier expects {params.in_bands} bands, got {x.shape[1]}")
    if x.shape[2] != params.patch or x.shape[3] != params.patch:
        raise ShapeError(f"classifier expects {params.patch}x{params.patch} patches, "
                         f"got {x.shape[2]}x{x.shape[3]}")
    if train_mode and rng is None:
        raise ValidationError("train_mode classification needs an rng for dropout")

    for stage in params.stages:
        x = conv2d(x, stage.kernels, padding=PADDING)
        x = batch_norm(x, reshape(stage.bn_scale, (1, -1, 1, 1)),
                       reshape(stage.bn_shift, (1, -1, 1, 1)), axes=(0, 2, 3))
        x = relu(x)
        x = maxpool2d(x)
    if params.global_pool:
        flat = tmean(x, axis=(2, 3))
    else:
        flat = reshape(x, (x.shape[0], -1))
    flat = dropout(flat, params.dropout_rate, rng, train_mode)
    logits = matmul(flat, params.fc_weight) + params.fc_bias
    return softmax(logits, axis=-1)


def classification_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of 1-based labels under probability rows."""
    return nll_from_probs(probs, labels)
