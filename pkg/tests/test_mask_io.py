import json

import numpy as np
import pytest

from boundseg.errors import ValidationError
from boundseg.mask_io import (
    load_label_mask,
    load_prob_map,
    save_gradient,
    save_label_mask,
    save_prob_map,
    sidecar_path,
)
from boundseg.masks import LabelMask, ProbMap, one_hot


def test_label_mask_png_round_trip(tmp_path):
    labels = np.array([[0, 1, 2], [2, 1, 0]])
    mask = LabelMask(labels, num_classes=3)
    path = tmp_path / "m.png"
    save_label_mask(mask, path)
    back = load_label_mask(path)
    assert np.array_equal(back.labels, labels)
    assert back.num_classes == 3


def test_label_mask_pgm_round_trip(tmp_path):
    labels = np.array([[0, 4], [1, 0]])
    path = tmp_path / "m.pgm"
    save_label_mask(LabelMask(labels, num_classes=5), path)
    back = load_label_mask(path)
    assert np.array_equal(back.labels, labels)


def test_load_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_label_mask(tmp_path / "nope.png")


def test_load_with_explicit_class_count(tmp_path):
    path = tmp_path / "m.png"
    save_label_mask(LabelMask(np.array([[0, 1]]), num_classes=2), path)
    assert load_label_mask(path, num_classes=7).num_classes == 7


def test_prob_map_round_trip(tmp_path):
    mask = LabelMask(np.array([[0, 1], [2, 1]]), num_classes=3)
    p = one_hot(mask)
    path = tmp_path / "p.raw"
    save_prob_map(p, path)
    meta = json.loads(sidecar_path(path).read_text())
    assert meta == {"height": 2, "width": 2, "classes": 3}
    back = load_prob_map(path)
    assert np.array_equal(back.probs, p.probs)  # one-hot is exact in float32


def test_prob_map_is_little_endian_float32(tmp_path):
    p = ProbMap(np.array([[[0.25, 0.75]]]))
    path = tmp_path / "p.raw"
    save_prob_map(p, path)
    raw = np.fromfile(path, dtype="<f4")
    assert raw.tolist() == [0.25, 0.75]


def test_prob_map_size_mismatch(tmp_path):
    path = tmp_path / "p.raw"
    save_prob_map(ProbMap(np.full((2, 2, 2), 0.5)), path)
    sidecar_path(path).write_text(json.dumps({"height": 3, "width": 2, "classes": 2}))
    with pytest.raises(ValidationError, match="sidecar implies"):
        load_prob_map(path)


def test_prob_map_missing_sidecar(tmp_path):
    path = tmp_path / "p.raw"
    path.write_bytes(b"\x00" * 8)
    with pytest.raises(ValidationError, match="sidecar"):
        load_prob_map(path)


def test_loading_checks_probability_sums(tmp_path):
    path = tmp_path / "p.raw"
    np.full(4, 0.7, dtype="<f4").tofile(path)
    sidecar_path(path).write_text(json.dumps({"height": 1, "width": 2, "classes": 2}))
    with pytest.raises(ValidationError, match="sum"):
        load_prob_map(path)


def test_gradient_format_matches_prob_map(tmp_path):
    grad = np.linspace(-1, 1, 12).reshape(2, 2, 3)
    path = tmp_path / "g.raw"
    save_gradient(grad, path)
    raw = np.fromfile(path, dtype="<f4").reshape(2, 2, 3)
    assert np.allclose(raw, grad, atol=1e-7)
    meta = json.loads(sidecar_path(path).read_text())
    assert meta == {"height": 2, "width": 2, "classes": 3}
