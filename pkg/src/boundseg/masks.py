"""Core mask and probability-field types plus conversions between them.

All types are immutable after construction (arrays are marked read-only),
so instances can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PROB_SUM_TOL = 1e-6


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LabelMask:
    """2D integer class-label image with a declared class count.

    Args:
        labels: (H, W) integer array, values in [0, num_classes).
        num_classes: declared class count K (>= 1).
    """

    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"labels must be a 2D array with positive shape, got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == arr.astype(np.int64)):
                raise ValidationError("labels must contain integer values")
        arr = arr.astype(np.int64, copy=True)
        if self.num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {self.num_classes}")
        if arr.min() < 0:
            idx = int(np.flatnonzero(arr.ravel() < 0)[0])
            raise ValidationError(f"negative label at pixel index {idx}")
        if arr.max() >= self.num_classes:
            idx = int(np.flatnonzero(arr.ravel() >= self.num_classes)[0])
            raise ValidationError(
                f"label {int(arr.ravel()[idx])} at pixel index {idx} "
                f">= declared class count {self.num_classes}"
            )
        object.__setattr__(self, "labels", _freeze(arr))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class BinaryMask:
    """2D boolean mask for a single class."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"bits must be a 2D array with positive shape, got {arr.shape}")
        object.__setattr__(self, "bits", _freeze(arr.astype(bool)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def is_empty(self) -> bool:
        return not bool(self.bits.any())

    def is_full(self) -> bool:
        return bool(self.bits.all())


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class-probability field of shape (H, W, K).

    Each pixel's K-vector must lie in [0, 1] and sum to 1 within
    PROB_SUM_TOL; the tolerance absorbs float32 file rounding while
    still catching real normalization bugs.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"probs must be a 3D (H, W, K) array, got shape {arr.shape}")
        if arr.shape[2] < 2:
            raise ValidationError(f"need at least 2 classes, got {arr.shape[2]}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=2)
        off = np.abs(sums - 1.0)
        if off.max() > PROB_SUM_TOL:
            r, c = np.unravel_index(int(off.argmax()), off.shape)
            raise ValidationError(
                f"pixel ({r}, {c}) probabilities sum to {sums[r, c]:.9f}, "
                f"outside 1 +/- {PROB_SUM_TOL}"
            )
        object.__setattr__(self, "probs", _freeze(arr))

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def classes(self) -> int:
        return self.probs.shape[2]


def one_hot(mask: LabelMask, num_classes: int | None = None) -> ProbMap:
    """Convert a label mask to an indicator-vector probability field.

    ``num_classes`` defaults to the mask's declared count; a larger value
    pads with all-zero classes.
    """
    k = mask.num_classes if num_classes is None else num_classes
    labels = mask.labels
    if labels.max() >= k:
        idx = int(np.flatnonzero(labels.ravel() >= k)[0])
        raise ValidationError(
            f"label {int(labels.ravel()[idx])} at pixel index {idx} >= num_classes {k}"
        )
    if k < 2:
        raise ValidationError(f"one_hot needs num_classes >= 2, got {k}")
    probs = np.zeros((mask.height, mask.width, k), dtype=np.float64)
    rows, cols = np.indices(labels.shape)
    probs[rows, cols, labels] = 1.0
    return ProbMap(probs)


def argmax_labels(p: ProbMap) -> LabelMask:
    """Hard labels from a probability field; ties go to the lowest class index."""
    return LabelMask(np.argmax(p.probs, axis=2), num_classes=p.classes)


def class_mask(mask: LabelMask, class_id: int) -> BinaryMask:
    """Binary mask that is true exactly where the label equals ``class_id``."""
    if not 0 <= class_id < mask.num_classes:
        raise ValidationError(
            f"class_id {class_id} out of range [0, {mask.num_classes})"
        )
    return BinaryMask(mask.labels == class_id)
