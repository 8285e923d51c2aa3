"""Hard-mask evaluation metrics: dice overlap, Hausdorff distance,
boundary IoU, difference-over-union, and per-class reports with a
large/small target split.

Empty-mask conventions: both masks empty gives DSC = 1 and boundary
IoU = 1 (a correctly predicted absence is not an error); the Hausdorff
distance is undefined whenever either mask is empty and such classes are
reported as skipped rather than folded into means.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .losses import EPSILON, adaptive_alpha
from .masks import BinaryMask, LabelMask, class_mask
from .morphology import area, boundary_width, contour, distance_transform, inner_boundary

CSV_COLUMNS = ("image_id", "class_id", "dsc", "hd", "biou", "dou", "size_class")

SIZE_LARGE = "large"
SIZE_SMALL = "small"
SIZE_EMPTY = "empty"

# contour-to-area ratio below which a target counts as large
LARGE_TARGET_RATIO = 0.2


def _check_shapes(g: BinaryMask, p: BinaryMask) -> None:
    if g.shape != p.shape:
        raise ValidationError(f"mask shapes differ: {g.shape} vs {p.shape}")


def dsc(g: BinaryMask, p: BinaryMask) -> float:
    """Dice similarity 2|G n P| / (|G| + |P|); 1 when both masks are empty."""
    _check_shapes(g, p)
    inter = int(np.count_nonzero(g.bits & p.bits))
    denom = area(g) + area(p)
    if denom == 0:
        return 1.0
    return 2.0 * inter / denom


def hausdorff(
    g: BinaryMask, p: BinaryMask, spacing: float = 1.0, percentile: float | None = None
) -> float:
    """Symmetric Hausdorff distance between the two masks' contour pixel sets.

    ``percentile`` replaces the directed maxima with that percentile of the
    directed distances (e.g. 95 for HD95); default is the exact maximum.
    """
    _check_shapes(g, p)
    if spacing <= 0.0:
        raise ValidationError(f"spacing must be > 0, got {spacing}")
    if g.is_empty() or p.is_empty():
        raise UndefinedMetricError("Hausdorff distance is undefined for an empty mask")
    ring_g = contour(g)
    ring_p = contour(p)
    dist_to_p = distance_transform(ring_p).values
    dist_to_g = distance_transform(ring_g).values
    gp = dist_to_p[ring_g.bits]
    pg = dist_to_g[ring_p.bits]
    if percentile is None:
        value = max(float(gp.max()), float(pg.max()))
    else:
        if not 0.0 < percentile <= 100.0:
            raise ValidationError(f"percentile must lie in (0, 100], got {percentile}")
        value = max(float(np.percentile(gp, percentile)), float(np.percentile(pg, percentile)))
    return value * spacing


def boundary_iou(g: BinaryMask, p: BinaryMask, d: int | None = None) -> float:
    """IoU of the two masks' inner-boundary rings of width ``d``.

    ``d`` defaults to the 0.5%-of-diagonal rule.  Both rings empty gives 1.
    """
    _check_shapes(g, p)
    if d is None:
        d = boundary_width(g.height, g.width)
    ring_g = inner_boundary(g, d)
    ring_p = inner_boundary(p, d)
    inter = int(np.count_nonzero(ring_g.bits & ring_p.bits))
    union = int(np.count_nonzero(ring_g.bits | ring_p.bits))
    if union == 0:
        return 1.0
    return inter / union


def dou(g: BinaryMask, p: BinaryMask, alpha: float | None = None) -> float:
    """Hard difference-over-partial-union score (0 = perfect match).

    ``alpha`` defaults to the adaptive rule computed from ``g``.
    """
    _check_shapes(g, p)
    if alpha is None:
        alpha = adaptive_alpha(g)
    inter = int(np.count_nonzero(g.bits & p.bits))
    union = int(np.count_nonzero(g.bits | p.bits))
    diff = union - inter
    return diff / (diff + (1.0 - alpha) * inter + EPSILON)


def classify_size(g: BinaryMask) -> str:
    """'large' when contour/area < 0.2, 'small' otherwise, 'empty' for no target."""
    size = area(g)
    if size == 0:
        return SIZE_EMPTY
    ratio = int(np.count_nonzero(contour(g).bits)) / size
    return SIZE_LARGE if ratio < LARGE_TARGET_RATIO else SIZE_SMALL


@dataclass(frozen=True)
class MetricConfig:
    boundary_d: int | None = None      # None: per-image 0.5%-of-diagonal rule
    spacing: float = 1.0
    include_background: bool = False
    hd_percentile: float | None = None

    def __post_init__(self) -> None:
        if self.boundary_d is not None and self.boundary_d < 1:
            raise ValidationError(f"boundary width must be >= 1, got {self.boundary_d}")
        if self.spacing <= 0.0:
            raise ValidationError(f"spacing must be > 0, got {self.spacing}")


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    dsc: float
    hd: float | None          # None when either mask is empty
    boundary_iou: float
    dou: float
    size_class: str
    present: bool = True      # false when the class is absent from both masks


@dataclass
class MetricReport:
    per_class: list[ClassMetrics]
    mean_dsc: float | None = None
    mean_hd: float | None = None
    mean_boundary_iou: float | None = None
    mean_dou: float | None = None
    hd_skipped: int = 0
    empty_classes: int = 0
    evaluated_classes: int = field(default=0)

    def to_json_dict(self) -> dict:
        return {
            "per_class": [
                {
                    "class_id": m.class_id,
                    "dsc": m.dsc,
                    "hd": m.hd,
                    "biou": m.boundary_iou,
                    "dou": m.dou,
                    "size_class": m.size_class,
                    "present": m.present,
                }
                for m in self.per_class
            ],
            "aggregates": {
                "mean_dsc": self.mean_dsc,
                "mean_hd": self.mean_hd,
                "mean_biou": self.mean_boundary_iou,
                "mean_dou": self.mean_dou,
                "hd_skipped": self.hd_skipped,
                "empty_classes": self.empty_classes,
                "evaluated_classes": self.evaluated_classes,
            },
        }


def evaluate_pair(g: LabelMask, p: LabelMask, cfg: MetricConfig | None = None) -> MetricReport:
    """Per-class DSC / Hausdorff / boundary IoU / DoU for one mask pair.

    Classes absent from both masks are listed but excluded from the means
    (their conventional perfect scores would only dilute real errors);
    Hausdorff means cover classes where both masks are nonempty.
    """
    cfg = cfg or MetricConfig()
    if g.shape != p.shape:
        raise ValidationError(f"mask shapes differ: {g.shape} vs {p.shape}")
    if g.num_classes != p.num_classes:
        raise ValidationError(
            f"class counts differ: {g.num_classes} vs {p.num_classes}"
        )
    classes = range(g.num_classes) if cfg.include_background else range(1, g.num_classes)
    rows: list[ClassMetrics] = []
    dscs, hds, bious, dous = [], [], [], []
    hd_skipped = 0
    empty_classes = 0
    for c in classes:
        gm = class_mask(g, c)
        pm = class_mask(p, c)
        size_class = classify_size(gm)
        c_dsc = dsc(gm, pm)
        c_biou = boundary_iou(gm, pm, cfg.boundary_d)
        c_dou = dou(gm, pm)
        if gm.is_empty() or pm.is_empty():
            c_hd = None
            hd_skipped += 1
        else:
            c_hd = hausdorff(gm, pm, cfg.spacing, cfg.hd_percentile)
        present = not (gm.is_empty() and pm.is_empty())
        rows.append(ClassMetrics(c, c_dsc, c_hd, c_biou, c_dou, size_class, present))
        if not present:
            empty_classes += 1
            continue
        dscs.append(c_dsc)
        bious.append(c_biou)
        dous.append(c_dou)
        if c_hd is not None:
            hds.append(c_hd)
    return MetricReport(
        per_class=rows,
        mean_dsc=float(np.mean(dscs)) if dscs else None,
        mean_hd=float(np.mean(hds)) if hds else None,
        mean_boundary_iou=float(np.mean(bious)) if bious else None,
        mean_dou=float(np.mean(dous)) if dous else None,
        hd_skipped=hd_skipped,
        empty_classes=empty_classes,
        evaluated_classes=len(dscs),
    )


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6g}"


def reports_to_csv(reports: dict[str, MetricReport]) -> str:
    """Serialize per-class rows for a set of images, ordered by image id.

    Columns are fixed (image_id, class_id, dsc, hd, biou, dou, size_class)
    so outputs stay diffable.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for image_id in sorted(reports):
        for m in reports[image_id].per_class:
            writer.writerow(
                [
                    image_id,
                    m.class_id,
                    _fmt(m.dsc),
                    _fmt(m.hd),
                    _fmt(m.boundary_iou),
                    _fmt(m.dou),
                    m.size_class,
                ]
            )
    return buf.getvalue()


def reports_to_json(reports: dict[str, MetricReport]) -> str:
    return json.dumps(
        {image_id: reports[image_id].to_json_dict() for image_id in sorted(reports)},
        indent=2,
    )


def aggregate_reports(reports: dict[str, MetricReport]) -> dict:
    """Dataset-level means plus the large/small split over all per-class rows.

    HD spread is reported as the standard deviation across all defined
    per-class values (images and classes pooled).
    """
    dscs, hds, bious, dous = [], [], [], []
    by_size: dict[str, list[float]] = {SIZE_LARGE: [], SIZE_SMALL: []}
    hd_skipped = 0
    empty_classes = 0
    for image_id in sorted(reports):
        rep = reports[image_id]
        hd_skipped += rep.hd_skipped
        empty_classes += rep.empty_classes
        for m in rep.per_class:
            if not m.present:
                continue
            if m.size_class in by_size:
                by_size[m.size_class].append(m.dsc)
            dscs.append(m.dsc)
            bious.append(m.boundary_iou)
            dous.append(m.dou)
            if m.hd is not None:
                hds.append(m.hd)
    def mean(vals):
        return float(np.mean(vals)) if vals else None
    return {
        "images": len(reports),
        "mean_dsc": mean(dscs),
        "mean_hd": mean(hds),
        "std_hd": float(np.std(hds)) if hds else None,
        "mean_biou": mean(bious),
        "mean_dou": mean(dous),
        "mean_dsc_large": mean(by_size[SIZE_LARGE]),
        "mean_dsc_small": mean(by_size[SIZE_SMALL]),
        "large_targets": len(by_size[SIZE_LARGE]),
        "small_targets": len(by_size[SIZE_SMALL]),
        "hd_skipped": hd_skipped,
        "empty_classes": empty_classes,
    }
