"""Differentiable region losses over probability fields.

Every loss returns a scalar value and (on request) the analytic gradient
with respect to the per-pixel class probabilities.  Probabilities act as
fuzzy set memberships: region/overlap terms are sums of ``g * p`` per
class, which reduce to the exact set counts on binary inputs.

Conventions shared by all losses:

* denominator smoothing ``EPSILON`` keeps empty-target cases finite and
  makes a class absent from both target and prediction cost 0;
* class aggregation is an unweighted mean over foreground classes;
  background participates only when ``include_background`` is set;
* inputs are probabilities, not logits — callers normalize upstream.

Region sums use strictly sequential (row-major) accumulation so values
are bit-reproducible and match a per-pixel reference summation exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .masks import BinaryMask, LabelMask, ProbMap
from .morphology import area, contour_length, distance_transform

EPSILON = 1e-6
PROB_FLOOR = 1e-7
ALPHA_CEILING = 1.0 - 1e-9

LOSS_NAMES = ("dou", "dice", "ce", "dice_ce", "tversky", "boundary", "scheduled")


@dataclass(frozen=True)
class RegionSums:
    """Soft region totals for one class plane.

    intersection = sum(g * p), truth_sum = sum(g), pred_sum = sum(p),
    difference = truth_sum + pred_sum - 2 * intersection.

    For planes with entries in [0, 1] both intersection and difference are
    nonnegative; finite-difference probes may step just outside that box,
    so the bounds are not enforced here.
    """

    intersection: float
    difference: float
    truth_sum: float
    pred_sum: float


@dataclass(frozen=True)
class DoUConfig:
    """Configuration for the boundary difference-over-union loss.

    alpha=None selects the adaptive per-class rule (computed from the
    target mask's contour/area ratio); a fixed alpha must lie in [0, 1).
    """

    alpha: float | None = None
    epsilon: float = EPSILON
    include_background: bool = False

    def __post_init__(self) -> None:
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise ValidationError(f"fixed alpha must lie in [0, 1), got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray | None = None
    skipped_classes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise NumericError(f"loss value is not finite: {self.value}")
        if self.gradient is not None and not np.all(np.isfinite(self.gradient)):
            raise NumericError("loss gradient contains non-finite entries")


def _seq_sum(values: np.ndarray) -> float:
    # cumsum forces strict left-to-right accumulation, matching a
    # per-pixel reference loop bit for bit (np.sum pairs terms).
    flat = values.ravel()
    if flat.size == 0:
        return 0.0
    return float(np.cumsum(flat)[-1])


def _check_pair(p: ProbMap, g: LabelMask) -> None:
    if p.probs.shape[:2] != g.shape:
        raise ValidationError(
            f"probability field {p.probs.shape[:2]} and label mask {g.shape} differ in shape"
        )
    if p.classes != g.num_classes:
        raise ValidationError(
            f"probability field has {p.classes} classes, label mask declares {g.num_classes}"
        )


def _included_classes(num_classes: int, include_background: bool) -> range:
    return range(num_classes) if include_background else range(1, num_classes)


def region_sums(pred_slice: np.ndarray, truth: BinaryMask) -> RegionSums:
    """Soft region totals between one probability plane and a binary target."""
    plane = np.asarray(pred_slice, dtype=np.float64)
    if plane.shape != truth.shape:
        raise ValidationError(
            f"prediction plane {plane.shape} and target mask {truth.shape} differ in shape"
        )
    return _region_sums_arrays(plane, truth.bits.astype(np.float64))


def _region_sums_arrays(plane: np.ndarray, truth: np.ndarray) -> RegionSums:
    s_i = _seq_sum(truth * plane)
    s_g = _seq_sum(truth)
    s_p = _seq_sum(plane)
    s_d = s_g + s_p - 2.0 * s_i
    return RegionSums(intersection=s_i, difference=s_d, truth_sum=s_g, pred_sum=s_p)


def adaptive_alpha(truth: BinaryMask) -> float:
    """Boundary-emphasis weight from the target's contour/area ratio.

    Large targets (thin boundary relative to size) get alpha near 1,
    small or thin targets fall back to 0; an empty target yields 0.
    """
    return _adaptive_alpha_counts(contour_length(truth), area(truth))


def _adaptive_alpha_counts(contour_pixels: int, size: int) -> float:
    if size == 0:
        return 0.0
    raw = 1.0 - 2.0 * contour_pixels / size
    return min(max(raw, 0.0), ALPHA_CEILING)


def dou_value_from_sums(sums: RegionSums, alpha: float, epsilon: float = EPSILON) -> float:
    """Difference-over-partial-union value for precomputed region sums."""
    return sums.difference / (sums.difference + (1.0 - alpha) * sums.intersection + epsilon)


def schedule_weight(epoch: int) -> float:
    """Combined-loss weight: starts at 1, decays by 0.01 per epoch, floors at 0.01."""
    if epoch < 0:
        raise ValidationError(f"epoch must be >= 0, got {epoch}")
    return max(1.0 - 0.01 * epoch, 0.01)


def loss_curve(alpha: float, samples: int) -> list[tuple[float, float, float]]:
    """Closed-form dice and difference-over-union losses as overlap grows.

    Models two unit-area regions whose intersection is ``t``: the dice
    loss is 1 - t and the DoU loss is (2 - 2t) / ((2 - 2t) + (1 - alpha) t).
    Returns (t, dice, dou) rows for ``samples`` evenly spaced t in [0, 1].
    """
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha must lie in [0, 1), got {alpha}")
    if samples < 2:
        raise ValidationError(f"samples must be >= 2, got {samples}")
    rows = []
    for t in np.linspace(0.0, 1.0, samples):
        t = float(t)
        diff = 2.0 - 2.0 * t
        dice = 1.0 - t
        denom = diff + (1.0 - alpha) * t
        dou = diff / denom if denom > 0.0 else 0.0
        rows.append((t, dice, dou))
    return rows


def _class_planes(labels: np.ndarray, class_id: int) -> tuple[np.ndarray, np.ndarray]:
    bits = labels == class_id
    return bits, bits.astype(np.float64)


def _dou_arrays(
    probs: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    alpha: float | None,
    epsilon: float,
    include_background: bool,
    grad: bool,
) -> LossResult:
    included = _included_classes(num_classes, include_background)
    n = max(len(included), 1)
    total = 0.0
    gradient = np.zeros_like(probs) if grad else None
    for c in included:
        bits, truth = _class_planes(labels, c)
        sums = _region_sums_arrays(probs[:, :, c], truth)
        if sums.truth_sum == 0.0 and sums.pred_sum == 0.0:
            continue  # absent everywhere: costs nothing, moves nothing
        if alpha is None:
            a = _adaptive_alpha_counts(contour_length(BinaryMask(bits)), int(sums.truth_sum))
        else:
            a = alpha
        num = sums.difference
        den = sums.difference + (1.0 - a) * sums.intersection + epsilon
        total += num / den
        if grad:
            d_num = 1.0 - 2.0 * truth
            d_den = 1.0 - (1.0 + a) * truth
            gradient[:, :, c] = (d_num * den - num * d_den) / (den * den * n)
    return LossResult(value=total / n, gradient=gradient)


def _tversky_arrays(
    probs: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    alpha: float,
    beta: float,
    epsilon: float,
    include_background: bool,
    grad: bool,
) -> LossResult:
    # Numerator and denominator are scaled by 2 so alpha = beta = 0.5
    # reproduces the dice ratio (2*i + eps) / (2*i + fn + fp + eps)
    # bit for bit; the plain 1x form would shift the epsilon weighting.
    included = _included_classes(num_classes, include_background)
    n = max(len(included), 1)
    total = 0.0
    gradient = np.zeros_like(probs) if grad else None
    for c in included:
        _, truth = _class_planes(labels, c)
        sums = _region_sums_arrays(probs[:, :, c], truth)
        if sums.truth_sum == 0.0 and sums.pred_sum == 0.0:
            continue
        fn = sums.truth_sum - sums.intersection
        fp = sums.pred_sum - sums.intersection
        num = 2.0 * sums.intersection + epsilon
        den = 2.0 * sums.intersection + 2.0 * (alpha * fn + beta * fp) + epsilon
        total += 1.0 - num / den
        if grad:
            d_num = 2.0 * truth
            d_den = 2.0 * truth * (1.0 - alpha - beta) + 2.0 * beta
            gradient[:, :, c] = -(d_num * den - num * d_den) / (den * den * n)
    return LossResult(value=total / n, gradient=gradient)


def _ce_arrays(probs: np.ndarray, labels: np.ndarray, grad: bool) -> LossResult:
    n_pixels = labels.size
    rows, cols = np.indices(labels.shape)
    p_true = probs[rows, cols, labels]
    clamped = np.maximum(p_true, PROB_FLOOR)
    value = float(np.mean(-np.log(clamped)))
    gradient = None
    if grad:
        gradient = np.zeros_like(probs)
        # below the clamp the loss is flat, so the gradient there is 0
        vals = np.where(p_true >= PROB_FLOOR, -1.0 / (n_pixels * clamped), 0.0)
        gradient[rows, cols, labels] = vals
    return LossResult(value=value, gradient=gradient)


def _combine(results: Sequence[LossResult], weights: Sequence[float]) -> LossResult:
    value = sum(w * r.value for r, w in zip(results, weights))
    gradient = None
    if all(r.gradient is not None for r in results):
        gradient = sum(w * r.gradient for r, w in zip(results, weights))
    skipped: tuple[int, ...] = ()
    for r in results:
        skipped = skipped + tuple(c for c in r.skipped_classes if c not in skipped)
    return LossResult(value=value, gradient=gradient, skipped_classes=skipped)


def _signed_map_for_class(labels: np.ndarray, class_id: int) -> np.ndarray | None:
    bits = labels == class_id
    if not bits.any() or bits.all():
        return None
    return distance_transform(BinaryMask(bits), signed=True).values


class _SignedMapCache:
    """Memoizes per-class signed distance maps keyed on the label buffer."""

    def __init__(self) -> None:
        self._key: bytes | None = None
        self._maps: dict[int, np.ndarray | None] = {}

    def get(self, labels: np.ndarray, class_id: int) -> np.ndarray | None:
        key = labels.tobytes()
        if key != self._key:
            self._key = key
            self._maps = {}
        if class_id not in self._maps:
            self._maps[class_id] = _signed_map_for_class(labels, class_id)
        return self._maps[class_id]


def _boundary_arrays(
    probs: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    include_background: bool,
    grad: bool,
    cache: _SignedMapCache | None = None,
) -> LossResult:
    included = _included_classes(num_classes, include_background)
    n_pixels = labels.size
    values = []
    skipped = []
    gradient = np.zeros_like(probs) if grad else None
    grads = {}
    for c in included:
        phi = cache.get(labels, c) if cache is not None else _signed_map_for_class(labels, c)
        if phi is None:
            skipped.append(c)
            continue
        values.append(_seq_sum(phi * probs[:, :, c]) / n_pixels)
        if grad:
            grads[c] = phi / n_pixels
    n = len(values)
    if n == 0:
        return LossResult(value=0.0, gradient=gradient, skipped_classes=tuple(skipped))
    if grad:
        for c, phi_grad in grads.items():
            gradient[:, :, c] = phi_grad / n
    return LossResult(value=sum(values) / n, gradient=gradient, skipped_classes=tuple(skipped))


def boundary_dou_loss(
    p: ProbMap, g: LabelMask, cfg: DoUConfig | None = None, grad: bool = True
) -> LossResult:
    """Boundary difference-over-union loss.

    Per class: difference / (difference + (1 - alpha) * intersection + eps),
    averaged over included classes.  Alpha shifts weight between the whole
    region (alpha=0, plain soft Jaccard) and its boundary (alpha near 1).
    """
    cfg = cfg or DoUConfig()
    _check_pair(p, g)
    return _dou_arrays(
        p.probs, g.labels, g.num_classes, cfg.alpha, cfg.epsilon, cfg.include_background, grad
    )


def dice_loss(
    p: ProbMap, g: LabelMask, include_background: bool = False, grad: bool = True
) -> LossResult:
    """Soft dice loss: 1 - (2i + eps) / (2i + difference + eps) per class."""
    _check_pair(p, g)
    return _tversky_arrays(
        p.probs, g.labels, g.num_classes, 0.5, 0.5, EPSILON, include_background, grad
    )


def cross_entropy_loss(p: ProbMap, g: LabelMask, grad: bool = True) -> LossResult:
    """Mean per-pixel negative log probability of the true class."""
    _check_pair(p, g)
    return _ce_arrays(p.probs, g.labels, grad)


def dice_ce_loss(
    p: ProbMap,
    g: LabelMask,
    weight_dice: float = 0.5,
    weight_ce: float = 0.5,
    include_background: bool = False,
    grad: bool = True,
) -> LossResult:
    """Weighted sum of dice and cross-entropy losses."""
    if weight_dice < 0.0 or weight_ce < 0.0:
        raise ValidationError("loss weights must be >= 0")
    return _combine(
        [dice_loss(p, g, include_background, grad), cross_entropy_loss(p, g, grad)],
        [weight_dice, weight_ce],
    )


def tversky_loss(
    p: ProbMap,
    g: LabelMask,
    alpha: float = 0.7,
    beta: float = 0.3,
    include_background: bool = False,
    grad: bool = True,
) -> LossResult:
    """Tversky loss weighting false negatives by alpha and false positives by beta.

    alpha = beta = 0.5 reduces to the dice loss exactly (same epsilon
    convention).
    """
    if alpha < 0.0 or beta < 0.0:
        raise ValidationError("tversky alpha and beta must be >= 0")
    _check_pair(p, g)
    return _tversky_arrays(
        p.probs, g.labels, g.num_classes, alpha, beta, EPSILON, include_background, grad
    )


def boundary_loss(
    p: ProbMap, g: LabelMask, include_background: bool = False, grad: bool = True
) -> LossResult:
    """Signed-distance-weighted mean of predicted probabilities.

    Classes whose target mask is empty or fills the image have no signed
    map; they are skipped and reported in ``skipped_classes``.
    """
    _check_pair(p, g)
    return _boundary_arrays(p.probs, g.labels, g.num_classes, include_background, grad)


def scheduled_combined_loss(
    p: ProbMap,
    g: LabelMask,
    epoch: int,
    include_background: bool = False,
    grad: bool = True,
) -> LossResult:
    """w(epoch) * (dice + ce) + (1 - w(epoch)) * boundary, w decaying 1 -> 0.01."""
    w = schedule_weight(epoch)
    return _combine(
        [
            dice_loss(p, g, include_background, grad),
            cross_entropy_loss(p, g, grad),
            boundary_loss(p, g, include_background, grad),
        ],
        [w, w, 1.0 - w],
    )


class LossFunction:
    """A named loss with array-level evaluation.

    Calling the object validates the typed inputs; ``evaluate`` works on
    raw arrays so the finite-difference checker and the fitter can probe
    fields that are not normalized probability maps.
    """

    def __init__(self, name: str, fn: Callable[[np.ndarray, np.ndarray, int, bool], LossResult]):
        self.name = name
        self._fn = fn

    def __call__(self, p: ProbMap, g: LabelMask, grad: bool = True) -> LossResult:
        _check_pair(p, g)
        return self._fn(p.probs, g.labels, g.num_classes, grad)

    def evaluate(
        self, probs: np.ndarray, labels: np.ndarray, num_classes: int, grad: bool = False
    ) -> LossResult:
        return self._fn(probs, labels, num_classes, grad)


def make_loss(name: str, **params) -> LossFunction:
    """Build a loss by name.

    Recognized names and their parameters:

    * ``dou``: alpha (None = adaptive), epsilon, include_background
    * ``dice``: include_background
    * ``ce``: (none)
    * ``dice_ce``: weight_dice, weight_ce, include_background
    * ``tversky``: alpha, beta, include_background
    * ``boundary``: include_background
    * ``scheduled``: epoch, include_background
    """
    def reject_unknown(allowed: set[str]) -> None:
        unknown = set(params) - allowed
        if unknown:
            raise ValidationError(f"loss '{name}' does not accept parameters {sorted(unknown)}")

    if name == "dou":
        reject_unknown({"alpha", "epsilon", "include_background"})
        cfg = DoUConfig(
            alpha=params.get("alpha"),
            epsilon=params.get("epsilon", EPSILON),
            include_background=params.get("include_background", False),
        )
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _dou_arrays(
                probs, labels, k, cfg.alpha, cfg.epsilon, cfg.include_background, grad
            ),
        )
    if name == "dice":
        reject_unknown({"include_background"})
        bg = params.get("include_background", False)
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _tversky_arrays(
                probs, labels, k, 0.5, 0.5, EPSILON, bg, grad
            ),
        )
    if name == "ce":
        reject_unknown(set())
        return LossFunction(name, lambda probs, labels, k, grad: _ce_arrays(probs, labels, grad))
    if name == "dice_ce":
        reject_unknown({"weight_dice", "weight_ce", "include_background"})
        w1 = params.get("weight_dice", 0.5)
        w2 = params.get("weight_ce", 0.5)
        if w1 < 0.0 or w2 < 0.0:
            raise ValidationError("loss weights must be >= 0")
        bg = params.get("include_background", False)
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _combine(
                [
                    _tversky_arrays(probs, labels, k, 0.5, 0.5, EPSILON, bg, grad),
                    _ce_arrays(probs, labels, grad),
                ],
                [w1, w2],
            ),
        )
    if name == "tversky":
        reject_unknown({"alpha", "beta", "include_background"})
        a = params.get("alpha", 0.7)
        b = params.get("beta", 0.3)
        if a < 0.0 or b < 0.0:
            raise ValidationError("tversky alpha and beta must be >= 0")
        bg = params.get("include_background", False)
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _tversky_arrays(
                probs, labels, k, a, b, EPSILON, bg, grad
            ),
        )
    if name == "boundary":
        reject_unknown({"include_background"})
        bg = params.get("include_background", False)
        cache = _SignedMapCache()
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _boundary_arrays(
                probs, labels, k, bg, grad, cache
            ),
        )
    if name == "scheduled":
        reject_unknown({"epoch", "include_background"})
        epoch = params.get("epoch", 0)
        w = schedule_weight(epoch)
        bg = params.get("include_background", False)
        cache = _SignedMapCache()
        return LossFunction(
            name,
            lambda probs, labels, k, grad: _combine(
                [
                    _tversky_arrays(probs, labels, k, 0.5, 0.5, EPSILON, bg, grad),
                    _ce_arrays(probs, labels, grad),
                    _boundary_arrays(probs, labels, k, bg, grad, cache),
                ],
                [w, w, 1.0 - w],
            ),
        )
    raise ValidationError(f"unknown loss '{name}'; expected one of {LOSS_NAMES}")


def check_gradient(
    loss: str | LossFunction,
    p: ProbMap,
    g: LabelMask,
    h: float = 1e-4,
    num_samples: int | None = None,
    seed: int = 0,
) -> float:
    """Compare the analytic gradient against central finite differences.

    Probes ``num_samples`` coordinates (all of them when None) and returns
    the maximum error relative to max(1, |analytic|, |numeric|); the floor
    keeps near-zero entries from amplifying roundoff.
    """
    if h <= 0.0:
        raise ValidationError(f"step h must be > 0, got {h}")
    if num_samples is not None and num_samples < 1:
        raise ValidationError(f"num_samples must be >= 1, got {num_samples}")
    fn = make_loss(loss) if isinstance(loss, str) else loss
    _check_pair(p, g)
    analytic = fn.evaluate(p.probs, g.labels, g.num_classes, grad=True).gradient
    probs = p.probs.copy()
    labels = g.labels
    total = probs.size
    if num_samples is None or num_samples >= total:
        flat_coords = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        flat_coords = rng.choice(total, size=num_samples, replace=False)
    coords = np.unravel_index(flat_coords, probs.shape)
    worst = 0.0
    for r, c, k in zip(*coords):
        orig = probs[r, c, k]
        probs[r, c, k] = orig + h
        hi = fn.evaluate(probs, labels, g.num_classes, grad=False).value
        probs[r, c, k] = orig - h
        lo = fn.evaluate(probs, labels, g.num_classes, grad=False).value
        probs[r, c, k] = orig
        numeric = (hi - lo) / (2.0 * h)
        a = float(analytic[r, c, k])
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst
