"""Binary morphology and geometry on masks.

Conventions, fixed so results are bit-reproducible:

* the structuring element is the 4-connected cross, for both erosion and
  contour detection;
* pixels outside the image count as background, so a target touching the
  border has boundary there;
* distances are exact Euclidean, in pixel units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import UndefinedMetricError, ValidationError
from .masks import BinaryMask

_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class DistanceMap:
    """Per-pixel Euclidean distances (negative inside the mask when signed)."""

    values: np.ndarray
    signed: bool

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"values must be 2D, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def erode(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Erode with the 4-connected cross; border pixels see background outside."""
    if iterations < 0:
        raise ValidationError(f"iterations must be >= 0, got {iterations}")
    if iterations == 0:
        return mask
    out = ndimage.binary_erosion(
        mask.bits, structure=_CROSS, iterations=iterations, border_value=0
    )
    return BinaryMask(out)


def inner_boundary(mask: BinaryMask, d: int) -> BinaryMask:
    """Pixels of the mask within ``d`` pixels of its contour: mask minus its d-fold erosion."""
    if d < 1:
        raise ValidationError(f"boundary width d must be >= 1, got {d}")
    return BinaryMask(mask.bits & ~erode(mask, d).bits)


def contour(mask: BinaryMask) -> BinaryMask:
    """True pixels with at least one false-or-outside 4-neighbor."""
    return inner_boundary(mask, 1)


def boundary_width(height: int, width: int) -> int:
    """Default boundary-region width: 0.5% of the image diagonal, floored at 1 pixel."""
    if height < 1 or width < 1:
        raise ValidationError(f"image shape must be positive, got {height}x{width}")
    return max(1, round(0.005 * float(np.hypot(height, width))))


def contour_length(mask: BinaryMask) -> int:
    """Number of contour pixels (4-boundary pixel count); 0 for an empty mask."""
    return int(np.count_nonzero(contour(mask).bits))


def area(mask: BinaryMask) -> int:
    return int(np.count_nonzero(mask.bits))


def distance_transform(mask: BinaryMask, signed: bool = False) -> DistanceMap:
    """Exact Euclidean distance to the mask.

    Unsigned: distance to the nearest true pixel (0 on the mask itself,
    +inf everywhere if the mask is empty).  Signed: magnitude is the
    distance to the contour pixel set, negated strictly inside the mask;
    undefined (raises) for empty and all-true masks.
    """
    bits = mask.bits
    if not signed:
        if not bits.any():
            return DistanceMap(np.full(bits.shape, np.inf), signed=False)
        return DistanceMap(ndimage.distance_transform_edt(~bits), signed=False)
    if not bits.any() or bits.all():
        raise UndefinedMetricError(
            "signed distance is undefined for an empty or all-true mask "
            "(no interior/exterior sign convention)"
        )
    ring = contour(mask)
    dist = ndimage.distance_transform_edt(~ring.bits)
    return DistanceMap(np.where(bits, -dist, dist), signed=True)
