"""Boundary-aware segmentation losses, boundary-quality metrics, and a
gradient-descent mask-fitting harness."""

from .errors import NumericError, UndefinedMetricError, ValidationError
from .fitter import (
    FitConfig,
    FitDivergedError,
    FitRecord,
    FitTrace,
    LossComparison,
    compare_losses,
    fit,
    synthesize_target,
)
from .losses import (
    DoUConfig,
    LossFunction,
    LossResult,
    RegionSums,
    adaptive_alpha,
    boundary_dou_loss,
    boundary_loss,
    check_gradient,
    cross_entropy_loss,
    dice_ce_loss,
    dice_loss,
    dou_value_from_sums,
    loss_curve,
    make_loss,
    region_sums,
    schedule_weight,
    scheduled_combined_loss,
    tversky_loss,
    LOSS_NAMES,
)
from .mask_io import (
    load_label_mask,
    load_prob_map,
    save_gradient,
    save_label_mask,
    save_prob_map,
)
from .masks import BinaryMask, LabelMask, ProbMap, argmax_labels, class_mask, one_hot
from .metrics import (
    ClassMetrics,
    MetricConfig,
    MetricReport,
    aggregate_reports,
    boundary_iou,
    classify_size,
    dou,
    dsc,
    evaluate_pair,
    hausdorff,
    reports_to_csv,
    reports_to_json,
)
from .morphology import (
    DistanceMap,
    area,
    boundary_width,
    contour,
    contour_length,
    distance_transform,
    erode,
    inner_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "ClassMetrics",
    "DistanceMap",
    "DoUConfig",
    "FitConfig",
    "FitDivergedError",
    "FitRecord",
    "FitTrace",
    "LabelMask",
    "LossComparison",
    "LossFunction",
    "LossResult",
    "LOSS_NAMES",
    "MetricConfig",
    "MetricReport",
    "NumericError",
    "ProbMap",
    "RegionSums",
    "UndefinedMetricError",
    "ValidationError",
    "adaptive_alpha",
    "aggregate_reports",
    "area",
    "argmax_labels",
    "boundary_dou_loss",
    "boundary_iou",
    "boundary_loss",
    "boundary_width",
    "check_gradient",
    "class_mask",
    "classify_size",
    "compare_losses",
    "contour",
    "contour_length",
    "cross_entropy_loss",
    "dice_ce_loss",
    "dice_loss",
    "distance_transform",
    "dou",
    "dou_value_from_sums",
    "dsc",
    "erode",
    "evaluate_pair",
    "fit",
    "hausdorff",
    "inner_boundary",
    "load_label_mask",
    "load_prob_map",
    "loss_curve",
    "make_loss",
    "one_hot",
    "region_sums",
    "reports_to_csv",
    "reports_to_json",
    "save_gradient",
    "save_label_mask",
    "save_prob_map",
    "schedule_weight",
    "scheduled_combined_loss",
    "synthesize_target",
    "tversky_loss",
]
