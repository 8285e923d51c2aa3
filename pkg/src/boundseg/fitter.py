"""Gradient-descent mask fitting: optimize a per-pixel logit field so its
softmax matches a target mask under a chosen loss.

The update is steepest descent with a fixed step length: the logit field
moves ``step_size`` (Euclidean norm) along the negative gradient each
step.  Normalizing the direction keeps one step size meaningful across
losses whose raw gradient magnitudes differ by orders of magnitude.
Every run is single-threaded and fully determined by its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .losses import LossFunction, make_loss
from .masks import LabelMask, class_mask
from .metrics import boundary_iou, dou, dsc
from .morphology import boundary_width

INIT_MODES = ("uniform", "noisy")


class FitDivergedError(NumericError):
    """The loss or its gradient became non-finite during a fit."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"fit aborted at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass(frozen=True)
class FitConfig:
    """Settings for one fitting run.

    ``loss_params`` feeds the loss registry (see ``losses.make_loss``).
    For the scheduled loss, the schedule epoch tracks the step counter
    unless a fixed ``epoch`` parameter is supplied.
    """

    loss: str = "dou"
    loss_params: dict = field(default_factory=dict)
    steps: int = 500
    step_size: float = 1.0
    seed: int = 0
    init: str = "noisy"
    noise_sigma: float = 0.1
    eval_every: int = 10

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.step_size <= 0.0:
            raise ValidationError(f"step_size must be > 0, got {self.step_size}")
        if self.eval_every < 1:
            raise ValidationError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.init not in INIT_MODES:
            raise ValidationError(f"init must be one of {INIT_MODES}, got '{self.init}'")
        if self.noise_sigma < 0.0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class FitRecord:
    step: int
    loss_value: float
    dsc: float
    boundary_iou: float
    dou: float


@dataclass
class FitTrace:
    label: str
    records: list[FitRecord]
    final_mask: LabelMask

    TRACE_COLUMNS = ("step", "loss", "dsc", "biou", "dou")

    def rows(self) -> list[tuple]:
        return [
            (r.step, r.loss_value, r.dsc, r.boundary_iou, r.dou) for r in self.records
        ]

    @property
    def final(self) -> FitRecord:
        return self.records[-1]


@dataclass
class LossComparison:
    """Aligned traces for several losses fitted under identical settings."""

    labels: list[str]
    traces: list[FitTrace]

    def header(self) -> list[str]:
        cols = ["step"]
        for label in self.labels:
            cols += [f"{label}_loss", f"{label}_dsc", f"{label}_biou", f"{label}_dou"]
        return cols

    def rows(self) -> list[list]:
        steps = [r.step for r in self.traces[0].records]
        out = []
        for i, step in enumerate(steps):
            row: list = [step]
            for trace in self.traces:
                r = trace.records[i]
                row += [r.loss_value, r.dsc, r.boundary_iou, r.dou]
            out.append(row)
        return out


def synthesize_target(shape: str, height: int, width: int, **params) -> LabelMask:
    """Rasterize a deterministic synthetic target (classes {0, 1}).

    Shapes and their parameters (all centered unless noted):

    * ``square``: side (default min(h, w) // 2)
    * ``circle``: radius (default min(h, w) // 4); radius 0 is a single pixel
    * ``ring``: outer_radius, inner_radius (outer disc minus inner disc)
    * ``two_blobs``: radius (default min(h, w) // 6), two discs at 1/4 and
      3/4 of the width

    Disc membership is (r - cy)^2 + (c - cx)^2 <= radius^2.
    """
    if height < 1 or width < 1:
        raise ValidationError(f"image shape must be positive, got {height}x{width}")
    shape = shape.replace("-", "_")
    rr, cc = np.indices((height, width))
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0

    def disc(radius: float, center=None) -> np.ndarray:
        y, x = center if center is not None else (cy, cx)
        return (rr - y) ** 2 + (cc - x) ** 2 <= radius ** 2

    if shape == "square":
        side = int(params.pop("side", min(height, width) // 2))
        if side < 1 or side > min(height, width):
            raise ValidationError(f"square side {side} does not fit a {height}x{width} image")
        top = (height - side) // 2
        left = (width - side) // 2
        fg = np.zeros((height, width), dtype=bool)
        fg[top : top + side, left : left + side] = True
    elif shape == "circle":
        radius = float(params.pop("radius", min(height, width) // 4))
        if radius < 0 or cy - radius < -0.5 or cx - radius < -0.5:
            raise ValidationError(f"circle radius {radius} does not fit a {height}x{width} image")
        fg = disc(radius)
    elif shape == "ring":
        outer = float(params.pop("outer_radius", min(height, width) // 3))
        inner = float(params.pop("inner_radius", outer / 2.0))
        if inner >= outer:
            raise ValidationError(f"ring inner radius {inner} must be < outer radius {outer}")
        if outer < 0 or cy - outer < -0.5 or cx - outer < -0.5:
            raise ValidationError(f"ring outer radius {outer} does not fit a {height}x{width} image")
        fg = disc(outer) & ~disc(inner)
    elif shape == "two_blobs":
        radius = float(params.pop("radius", min(height, width) // 6))
        centers = [(cy, (width - 1) * 0.25), (cy, (width - 1) * 0.75)]
        if radius < 0 or any(x - radius < -0.5 for _, x in centers):
            raise ValidationError(f"blob radius {radius} does not fit a {height}x{width} image")
        fg = disc(radius, centers[0]) | disc(radius, centers[1])
    else:
        raise ValidationError(
            f"unknown shape '{shape}'; expected square, circle, ring, or two_blobs"
        )
    if params:
        raise ValidationError(f"shape '{shape}' does not accept parameters {sorted(params)}")
    return LabelMask(fg.astype(np.int64), num_classes=2)


def _softmax(theta: np.ndarray) -> np.ndarray:
    shifted = theta - theta.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=2, keepdims=True)


def _softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    inner = (grad_p * p).sum(axis=2, keepdims=True)
    return p * (grad_p - inner)


def _hard_scores(target: LabelMask, predicted: LabelMask, d: int) -> tuple[float, float, float]:
    scores_dsc, scores_biou, scores_dou = [], [], []
    for c in range(1, target.num_classes):
        gm = class_mask(target, c)
        pm = class_mask(predicted, c)
        scores_dsc.append(dsc(gm, pm))
        scores_biou.append(boundary_iou(gm, pm, d))
        scores_dou.append(dou(gm, pm))
    n = max(len(scores_dsc), 1)
    return sum(scores_dsc) / n, sum(scores_biou) / n, sum(scores_dou) / n


def _resolve_loss(cfg: FitConfig) -> tuple[LossFunction | None, bool]:
    """Returns (loss, tracks_schedule); a tracked schedule re-binds per step."""
    if cfg.loss == "scheduled" and "epoch" not in cfg.loss_params:
        return None, True
    return make_loss(cfg.loss, **cfg.loss_params), False


def fit(target: LabelMask, cfg: FitConfig) -> FitTrace:
    """Descend the configured loss from a seeded logit field.

    Records a checkpoint every ``eval_every`` steps (and at the last
    step): the loss value plus hard-mask DSC / boundary IoU / DoU of the
    current argmax against the target, all measured after the update.
    """
    loss_fn, tracks_schedule = _resolve_loss(cfg)
    height, width, k = target.height, target.width, target.num_classes
    if k < 2:
        raise ValidationError("target must declare at least 2 classes")
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "noisy":
        theta = rng.normal(0.0, cfg.noise_sigma, size=(height, width, k))
    else:
        theta = np.zeros((height, width, k))
    labels = target.labels
    d = boundary_width(height, width)
    include_background = bool(cfg.loss_params.get("include_background", False))

    def evaluate(probs: np.ndarray, step: int, grad: bool):
        if tracks_schedule:
            return _scheduled_eval(probs, labels, k, step - 1, include_background, grad)
        return loss_fn.evaluate(probs, labels, k, grad=grad)

    records: list[FitRecord] = []
    for step in range(1, cfg.steps + 1):
        p = _softmax(theta)
        try:
            res = evaluate(p, step, grad=True)
        except NumericError as exc:
            raise FitDivergedError(step, str(exc)) from exc
        grad_theta = _softmax_backward(p, res.gradient)
        norm = float(np.sqrt(np.sum(grad_theta * grad_theta)))
        if not np.isfinite(norm):
            raise FitDivergedError(step, "gradient norm is not finite")
        if norm > 0.0:
            theta = theta - (cfg.step_size / norm) * grad_theta
        if step % cfg.eval_every == 0 or step == cfg.steps:
            p_now = _softmax(theta)
            try:
                value = evaluate(p_now, step, grad=False).value
            except NumericError as exc:
                raise FitDivergedError(step, str(exc)) from exc
            hard = argmax_labels_from_array(p_now, k)
            s_dsc, s_biou, s_dou = _hard_scores(target, hard, d)
            records.append(FitRecord(step, value, s_dsc, s_biou, s_dou))
    final_mask = argmax_labels_from_array(_softmax(theta), k)
    return FitTrace(label=cfg.loss, records=records, final_mask=final_mask)


def argmax_labels_from_array(probs: np.ndarray, num_classes: int) -> LabelMask:
    return LabelMask(np.argmax(probs, axis=2), num_classes=num_classes)


def _scheduled_eval(probs, labels, num_classes, epoch, include_background, grad):
    fn = make_loss("scheduled", epoch=epoch, include_background=include_background)
    return fn.evaluate(probs, labels, num_classes, grad=grad)


def compare_losses(target: LabelMask, cfgs: list[FitConfig]) -> LossComparison:
    """Fit every config on the same target and align their checkpoints.

    All configs must agree on steps, seed, and eval_every so rows compare
    like for like; no winner is asserted, the table just reports.
    """
    if not cfgs:
        raise ValidationError("compare_losses needs at least one config")
    base = cfgs[0]
    for cfg in cfgs[1:]:
        if (cfg.steps, cfg.seed, cfg.eval_every) != (base.steps, base.seed, base.eval_every):
            raise ValidationError(
                "all configs must share steps, seed, and eval_every for a fair comparison"
            )
    labels: list[str] = []
    for i, cfg in enumerate(cfgs):
        label = cfg.loss
        if label in labels:
            label = f"{label}#{i}"
        labels.append(label)
    traces = []
    for label, cfg in zip(labels, cfgs):
        trace = fit(target, cfg)
        trace.label = label
        traces.append(trace)
    return LossComparison(labels=labels, traces=traces)
