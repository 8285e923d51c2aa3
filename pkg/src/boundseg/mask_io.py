"""File I/O for label masks and probability fields.

Label masks travel as 8-bit single-channel images (PGM or PNG, pixel
value = class id).  Probability fields travel as raw little-endian
float32 tensors, row-major with the class index minor, next to a JSON
sidecar ``<file>.json`` holding ``{"height": H, "width": W, "classes": K}``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .masks import LabelMask, ProbMap


def sidecar_path(tensor_path: str | Path) -> Path:
    return Path(str(tensor_path) + ".json")


def load_label_mask(path: str | Path, num_classes: int | None = None) -> LabelMask:
    """Read an 8-bit grayscale image as a label mask.

    ``num_classes`` defaults to max(label) + 1 (at least 2 so the mask can
    feed a probability field).
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"label mask file not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                img = img.convert("L")
            labels = np.asarray(img, dtype=np.int64)
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(f"cannot read label mask {path}: {exc}") from exc
    if num_classes is None:
        num_classes = max(int(labels.max()) + 1, 2)
    return LabelMask(labels, num_classes=num_classes)


def save_label_mask(mask: LabelMask, path: str | Path) -> None:
    if mask.num_classes > 256:
        raise ValidationError(f"cannot store {mask.num_classes} classes in an 8-bit image")
    arr = mask.labels.astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").save(path)


def load_prob_map(path: str | Path) -> ProbMap:
    """Read a raw float32 tensor plus its JSON sidecar."""
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.is_file():
        raise ValidationError(f"tensor file not found: {path}")
    if not meta_path.is_file():
        raise ValidationError(f"tensor sidecar not found: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
        height, width, classes = int(meta["height"]), int(meta["width"]), int(meta["classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed sidecar {meta_path}: {exc}") from exc
    raw = np.fromfile(path, dtype="<f4")
    expected = height * width * classes
    if raw.size != expected:
        raise ValidationError(
            f"tensor {path} holds {raw.size} floats, sidecar implies {expected} "
            f"({height}x{width}x{classes})"
        )
    return ProbMap(raw.reshape(height, width, classes).astype(np.float64))


def save_prob_map(p: ProbMap, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p.probs.astype("<f4").tofile(path)
    sidecar_path(path).write_text(
        json.dumps({"height": p.height, "width": p.width, "classes": p.classes}) + "\n"
    )


def save_gradient(gradient: np.ndarray, path: str | Path) -> None:
    """Write a gradient field in the same raw-tensor format as probability maps."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(gradient, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"gradient must be 3D (H, W, K), got shape {arr.shape}")
    arr.astype("<f4").tofile(path)
    h, w, k = arr.shape
    sidecar_path(path).write_text(
        json.dumps({"height": h, "width": w, "classes": k}) + "\n"
    )
