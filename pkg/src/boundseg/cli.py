"""Command-line interface.

Commands: ``eval`` (batch metric reports for prediction/ground-truth
directories), ``curve`` (dice vs difference-over-union loss curves),
``alpha`` (per-class adaptive boundary weights), ``loss`` (one loss value
for a tensor/mask pair), ``fit`` (gradient-descent mask fitting demo).

Every command is deterministic given its inputs and flags.  Exit codes:
0 success, 1 validation failure, 2 runtime/numeric failure.

Flags may also come from a config file (``--config``): one ``key = value``
per line, ``#`` comments, keys matching the long flag names with either
dashes or underscores.  Values given on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import NumericError, UndefinedMetricError, ValidationError
from .fitter import FitConfig, compare_losses, fit, synthesize_target
from .losses import (
    LOSS_NAMES,
    adaptive_alpha,
    loss_curve,
    make_loss,
)
from .mask_io import load_label_mask, load_prob_map, save_gradient, save_label_mask
from .masks import LabelMask, class_mask, one_hot
from .metrics import (
    MetricConfig,
    SIZE_EMPTY,
    aggregate_reports,
    classify_size,
    evaluate_pair,
    reports_to_csv,
    reports_to_json,
)
from .morphology import area, contour_length

MASK_SUFFIXES = {".png", ".pgm"}

_DEFAULTS = {
    "format": "json",
    "out": ".",
    "workers": 1,
    "spacing": 1.0,
    "boundary_width": None,
    "include_background": False,
    "hd_percentile": None,
    "classes": None,
    "manifest": None,
    "alpha": None,
    "samples": 101,
    "tversky_alpha": 0.7,
    "tversky_beta": 0.3,
    "weight_dice": 0.5,
    "weight_ce": 0.5,
    "epoch": None,
    "grad": False,
    "loss": "dou",
    "steps": 500,
    "step_size": 1.0,
    "seed": 0,
    "init": "noisy",
    "sigma": 0.1,
    "eval_every": 10,
    "shape": None,
    "target": None,
    "height": 64,
    "width": 64,
    "side": None,
    "radius": None,
    "outer_radius": None,
    "inner_radius": None,
}

_CONFIG_BOOL = {"include_background", "grad"}
_CONFIG_INT = {"workers", "samples", "steps", "seed", "eval_every", "classes",
               "boundary_width", "epoch", "height", "width", "side"}
_CONFIG_FLOAT = {"spacing", "alpha", "tversky_alpha", "tversky_beta", "weight_dice",
                 "weight_ce", "step_size", "sigma", "hd_percentile", "radius",
                 "outer_radius", "inner_radius"}


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _convert(key: str, raw: str):
    try:
        if key in _CONFIG_BOOL:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw}")
        if key in _CONFIG_INT:
            return int(raw)
        if key in _CONFIG_FLOAT:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValidationError(f"config value for '{key}': {exc}") from exc


class _Options:
    """Flag values resolved from CLI > config file > builtin default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self._args = args
        self._config = config

    def get(self, key: str):
        value = getattr(self._args, key, None)
        if value is not None:
            return value
        if key in self._config:
            return _convert(key, self._config[key])
        return _DEFAULTS.get(key)

    def given(self, key: str) -> bool:
        return getattr(self._args, key, None) is not None or key in self._config


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _write_csv(path: Path, header: list, rows: list) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _prepare_out(opt: _Options) -> Path:
    out = Path(opt.get("out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(f"output directory {out} is not writable: {exc}") from exc
    return out


# ---------------------------------------------------------------- eval ----


def _list_masks(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise ValidationError(f"not a directory: {directory}")
    return {
        p.name: p
        for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in MASK_SUFFIXES
    }


def _pairs_from_manifest(manifest: Path, gt_dir: Path, pred_dir: Path) -> list[tuple[str, Path, Path]]:
    pairs = []
    for lineno, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValidationError(f"{manifest}:{lineno}: expected 'gt_name,pred_name'")
        pairs.append((parts[0], gt_dir / parts[0], pred_dir / parts[1]))
    return pairs


def cmd_eval(args: argparse.Namespace, opt: _Options) -> int:
    gt_dir = Path(args.gt_dir)
    pred_dir = Path(args.pred_dir)
    out = _prepare_out(opt)
    manifest = opt.get("manifest")
    failures: list[str] = []
    if manifest:
        pairs = _pairs_from_manifest(Path(manifest), gt_dir, pred_dir)
    else:
        gt_files = _list_masks(gt_dir)
        pred_files = _list_masks(pred_dir)
        pairs = [(name, gt_files[name], pred_files[name]) for name in sorted(gt_files) if name in pred_files]
        for name in sorted(set(gt_files) - set(pred_files)):
            failures.append(f"{name}: no matching prediction")
        for name in sorted(set(pred_files) - set(gt_files)):
            failures.append(f"{name}: no matching ground truth")
    if not pairs:
        raise ValidationError("no pairs found")

    cfg = MetricConfig(
        boundary_d=opt.get("boundary_width"),
        spacing=opt.get("spacing"),
        include_background=opt.get("include_background"),
        hd_percentile=opt.get("hd_percentile"),
    )
    classes = opt.get("classes")

    def evaluate(item):
        name, gt_path, pred_path = item
        try:
            gt = load_label_mask(gt_path)
            pred = load_label_mask(pred_path)
            if gt.shape != pred.shape:
                raise ValidationError(f"shape mismatch {gt.shape} vs {pred.shape}")
            k = classes if classes else max(gt.num_classes, pred.num_classes)
            gt = LabelMask(gt.labels, num_classes=k)
            pred = LabelMask(pred.labels, num_classes=k)
            return name, evaluate_pair(gt, pred, cfg), None
        except (ValidationError, UndefinedMetricError) as exc:
            return name, None, str(exc)

    workers = max(1, int(opt.get("workers")))
    if workers == 1:
        results = [evaluate(item) for item in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, pairs))

    reports = {}
    for name, report, error in results:
        if error is not None:
            failures.append(f"{name}: {error}")
        else:
            reports[name] = report

    if reports:
        aggregate = aggregate_reports(reports)
        if opt.get("format") == "csv":
            (out / "report.csv").write_text(reports_to_csv(reports))
            _write_csv(out / "aggregate.csv", ["key", "value"], list(aggregate.items()))
        else:
            payload = {
                "per_image": {name: reports[name].to_json_dict() for name in sorted(reports)},
                "aggregate": aggregate,
            }
            (out / "report.json").write_text(json.dumps(payload, indent=2))
        print(
            f"evaluated {len(reports)} pair(s): "
            f"mean dsc={_fmt(aggregate['mean_dsc'])} "
            f"mean hd={_fmt(aggregate['mean_hd'])} "
            f"mean biou={_fmt(aggregate['mean_biou'])}"
        )
    for line in failures:
        print(f"error: {line}", file=sys.stderr)
    return 1 if failures else 0


# --------------------------------------------------------------- curve ----


def cmd_curve(args: argparse.Namespace, opt: _Options) -> int:
    alpha = opt.get("alpha")
    if alpha is None:
        alpha = 0.8
    samples = opt.get("samples")
    rows = loss_curve(alpha, samples)
    out = _prepare_out(opt)
    if opt.get("format") == "csv":
        path = out / "curve.csv"
        _write_csv(path, ["overlap", "dice_loss", "dou_loss"], rows)
    else:
        path = out / "curve.json"
        path.write_text(json.dumps(
            [{"overlap": t, "dice_loss": d, "dou_loss": u} for t, d, u in rows], indent=2
        ))
    print(f"wrote {len(rows)} samples to {path}")
    return 0


# --------------------------------------------------------------- alpha ----


def cmd_alpha(args: argparse.Namespace, opt: _Options) -> int:
    mask = load_label_mask(args.gt, num_classes=opt.get("classes"))
    classes = range(mask.num_classes) if opt.get("include_background") else range(1, mask.num_classes)
    rows = []
    for c in classes:
        m = class_mask(mask, c)
        size = area(m)
        length = contour_length(m)
        raw = None if size == 0 else 1.0 - 2.0 * length / size
        rows.append((c, length, size, raw, adaptive_alpha(m), classify_size(m)))
    header = ["class_id", "contour", "area", "raw_alpha", "alpha", "size_class"]
    print(",".join(header))
    for row in rows:
        print(",".join(_fmt(v) for v in row))
    if opt.given("out"):
        out = _prepare_out(opt)
        if opt.get("format") == "csv":
            _write_csv(out / "alpha.csv", header, rows)
        else:
            (out / "alpha.json").write_text(json.dumps(
                [dict(zip(header, row)) for row in rows], indent=2
            ))
    return 0


# ---------------------------------------------------------------- loss ----


def _loss_params(name: str, opt: _Options) -> dict:
    bg = opt.get("include_background")
    if name == "dou":
        return {"alpha": opt.get("alpha"), "include_background": bg}
    if name == "dice":
        return {"include_background": bg}
    if name == "ce":
        return {}
    if name == "dice_ce":
        return {
            "weight_dice": opt.get("weight_dice"),
            "weight_ce": opt.get("weight_ce"),
            "include_background": bg,
        }
    if name == "tversky":
        return {
            "alpha": opt.get("tversky_alpha"),
            "beta": opt.get("tversky_beta"),
            "include_background": bg,
        }
    if name == "boundary":
        return {"include_background": bg}
    if name == "scheduled":
        params = {"include_background": bg}
        epoch = opt.get("epoch")
        if epoch is not None:
            params["epoch"] = epoch
        return params
    raise ValidationError(f"unknown loss '{name}'; expected one of {LOSS_NAMES}")


def cmd_loss(args: argparse.Namespace, opt: _Options) -> int:
    p = load_prob_map(args.pred)
    g = load_label_mask(args.gt, num_classes=p.classes)
    name = opt.get("loss")
    params = _loss_params(name, opt)
    if name == "scheduled" and "epoch" not in params:
        params["epoch"] = 0
    fn = make_loss(name, **params)
    result = fn(p, g, grad=bool(opt.get("grad")))
    print(f"{name} loss = {result.value:.6g}")
    if result.skipped_classes:
        print(
            f"warning: classes {list(result.skipped_classes)} skipped "
            "(empty or full target mask)",
            file=sys.stderr,
        )
    if opt.get("grad"):
        out = _prepare_out(opt)
        grad_path = out / "gradient.raw"
        save_gradient(result.gradient, grad_path)
        print(f"wrote gradient to {grad_path}")
    return 0


# ----------------------------------------------------------------- fit ----


def _fit_target(args: argparse.Namespace, opt: _Options) -> LabelMask:
    target_path = opt.get("target")
    shape = opt.get("shape")
    if target_path and shape:
        raise ValidationError("give either --target or --shape, not both")
    if target_path:
        return load_label_mask(target_path, num_classes=opt.get("classes"))
    if not shape:
        raise ValidationError("fit needs --target FILE or --shape NAME")
    params = {}
    for key in ("side",):
        if opt.get(key) is not None:
            params[key] = int(opt.get(key))
    for key in ("radius", "outer_radius", "inner_radius"):
        if opt.get(key) is not None:
            params[key] = float(opt.get(key))
    return synthesize_target(shape, opt.get("height"), opt.get("width"), **params)


def _write_trace(trace, out: Path, fmt: str) -> Path:
    if fmt == "csv":
        path = out / f"trace_{trace.label}.csv"
        _write_csv(path, list(trace.TRACE_COLUMNS), trace.rows())
    else:
        path = out / f"trace_{trace.label}.json"
        path.write_text(json.dumps(
            {
                "label": trace.label,
                "records": [
                    {"step": r.step, "loss": r.loss_value, "dsc": r.dsc,
                     "biou": r.boundary_iou, "dou": r.dou}
                    for r in trace.records
                ],
            },
            indent=2,
        ))
    return path


def cmd_fit(args: argparse.Namespace, opt: _Options) -> int:
    target = _fit_target(args, opt)
    out = _prepare_out(opt)
    fmt = opt.get("format")
    name = opt.get("loss")
    names = list(LOSS_NAMES) if name == "all" else [name]

    def build_cfg(loss_name: str) -> FitConfig:
        return FitConfig(
            loss=loss_name,
            loss_params=_loss_params(loss_name, opt),
            steps=opt.get("steps"),
            step_size=opt.get("step_size"),
            seed=opt.get("seed"),
            init=opt.get("init"),
            noise_sigma=opt.get("sigma"),
            eval_every=opt.get("eval_every"),
        )

    cfgs = [build_cfg(n) for n in names]
    if len(cfgs) == 1:
        trace = fit(target, cfgs[0])
        traces = [trace]
    else:
        comparison = compare_losses(target, cfgs)
        traces = comparison.traces
        if fmt == "csv":
            _write_csv(out / "comparison.csv", comparison.header(), comparison.rows())
        else:
            (out / "comparison.json").write_text(json.dumps(
                {"columns": comparison.header(), "rows": comparison.rows()}, indent=2
            ))
    for trace in traces:
        _write_trace(trace, out, fmt)
        save_label_mask(trace.final_mask, out / f"final_mask_{trace.label}.png")
        final = trace.final
        print(
            f"{trace.label}: final loss={final.loss_value:.6g} "
            f"dsc={final.dsc:.6g} biou={final.boundary_iou:.6g} dou={final.dou:.6g}"
        )
    return 0


# ---------------------------------------------------------------- main ----


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output file format (default json)")
    parser.add_argument("--out", default=None, help="output directory (default .)")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel workers for eval (default 1)")
    parser.add_argument("--spacing", type=float, default=None,
                        help="pixel spacing multiplier for distances (default 1.0)")
    parser.add_argument("--boundary-width", type=int, default=None, dest="boundary_width",
                        help="override the boundary ring width in pixels")
    parser.add_argument("--include-background", action=argparse.BooleanOptionalAction,
                        default=None, dest="include_background",
                        help="include class 0 in per-class losses/metrics")


def _add_loss_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--loss", default=None, help="loss name (default dou)")
    parser.add_argument("--alpha", type=float, default=None,
                        help="fixed dou alpha in [0,1); omit for adaptive")
    parser.add_argument("--tversky-alpha", type=float, default=None, dest="tversky_alpha",
                        help="tversky false-negative weight (default 0.7)")
    parser.add_argument("--tversky-beta", type=float, default=None, dest="tversky_beta",
                        help="tversky false-positive weight (default 0.3)")
    parser.add_argument("--weight-dice", type=float, default=None, dest="weight_dice",
                        help="dice weight in dice_ce (default 0.5)")
    parser.add_argument("--weight-ce", type=float, default=None, dest="weight_ce",
                        help="cross-entropy weight in dice_ce (default 0.5)")
    parser.add_argument("--epoch", type=int, default=None,
                        help="fixed schedule epoch for the scheduled loss")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boundseg",
        description="Boundary-aware segmentation losses, metrics, and mask fitting.",
    )
    parser.add_argument("--config", default=None, help="key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate prediction masks against ground truth")
    p_eval.add_argument("gt_dir", help="directory of ground-truth masks")
    p_eval.add_argument("pred_dir", help="directory of predicted masks")
    p_eval.add_argument("--manifest", default=None,
                        help="CSV of gt_name,pred_name pairs for renamed files")
    p_eval.add_argument("--classes", type=int, default=None,
                        help="class count (default: max label + 1 per pair)")
    p_eval.add_argument("--hd-percentile", type=float, default=None, dest="hd_percentile",
                        help="use a percentile Hausdorff variant (e.g. 95)")
    _add_global_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_curve = sub.add_parser("curve", help="emit dice / dou loss curves over overlap")
    p_curve.add_argument("--alpha", type=float, default=None,
                         help="dou alpha in [0,1) (default 0.8)")
    p_curve.add_argument("--samples", type=int, default=None,
                         help="number of overlap samples in [0,1] (default 101)")
    _add_global_flags(p_curve)
    p_curve.set_defaults(func=cmd_curve)

    p_alpha = sub.add_parser("alpha", help="per-class adaptive boundary weights of a mask")
    p_alpha.add_argument("gt", help="label mask file")
    p_alpha.add_argument("--classes", type=int, default=None,
                         help="class count (default: max label + 1)")
    _add_global_flags(p_alpha)
    p_alpha.set_defaults(func=cmd_alpha)

    p_loss = sub.add_parser("loss", help="compute one loss for a tensor/mask pair")
    p_loss.add_argument("--pred", required=True, help="raw float32 probability tensor")
    p_loss.add_argument("--gt", required=True, help="ground-truth label mask file")
    p_loss.add_argument("--grad", action=argparse.BooleanOptionalAction, default=None,
                        help="also write the gradient tensor")
    _add_loss_flags(p_loss)
    _add_global_flags(p_loss)
    p_loss.set_defaults(func=cmd_loss)

    p_fit = sub.add_parser("fit", help="fit a mask by gradient descent and log a trace")
    p_fit.add_argument("--target", default=None, help="label mask file to fit")
    p_fit.add_argument("--shape", default=None,
                       help="synthetic target: square, circle, ring, or two_blobs")
    p_fit.add_argument("--height", type=int, default=None, help="synthetic image height")
    p_fit.add_argument("--width", type=int, default=None, help="synthetic image width")
    p_fit.add_argument("--side", type=int, default=None, help="square side length")
    p_fit.add_argument("--radius", type=float, default=None, help="circle/blob radius")
    p_fit.add_argument("--outer-radius", type=float, default=None, dest="outer_radius")
    p_fit.add_argument("--inner-radius", type=float, default=None, dest="inner_radius")
    p_fit.add_argument("--classes", type=int, default=None,
                       help="class count when loading --target")
    p_fit.add_argument("--steps", type=int, default=None, help="descent steps (default 500)")
    p_fit.add_argument("--step-size", type=float, default=None, dest="step_size",
                       help="descent step length (default 1.0)")
    p_fit.add_argument("--seed", type=int, default=None, help="rng seed (default 0)")
    p_fit.add_argument("--init", choices=("uniform", "noisy"), default=None,
                       help="logit initialization (default noisy)")
    p_fit.add_argument("--sigma", type=float, default=None,
                       help="noise std for noisy init (default 0.1)")
    p_fit.add_argument("--eval-every", type=int, default=None, dest="eval_every",
                       help="checkpoint interval in steps (default 10)")
    _add_loss_flags(p_fit)
    _add_global_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config_file(args.config) if args.config else {}
        opt = _Options(args, config)
        return args.func(args, opt)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except UndefinedMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
