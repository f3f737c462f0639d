from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazetarget.dataset import HeadState, render_sample
from gazetarget.errors import MalformedRow, NoIntersection
from gazetarget.facedet import (
    CROP_SIZE,
    FaceBox,
    SidecarDetector,
    SyntheticDetector,
    bbox_features,
    crop_face,
    parse_sidecar,
    resize_bilinear,
    select_primary,
    sidecar_detect,
    synthetic_detect,
)
from gazetarget.geometry import GazePointCm
from gazetarget.imaging import Frame


def test_synthetic_detect_covers_head():
    frame, truth = render_sample(GazePointCm(3.0, 10.0), HeadState(300, 250, 170), 4)
    (box,) = synthetic_detect(frame)
    assert (box.x_b, box.y_b, box.w, box.h, box.confidence) == (truth.x_b, truth.y_b, truth.w, truth.h, 1.0)


def test_blank_frame_has_no_faces():
    assert synthetic_detect(Frame.blank(640, 480, (100, 100, 100))) == []
    assert SyntheticDetector()(Frame.blank(64, 48)) == []


def test_sidecar_parse_and_sort():
    table = parse_sidecar("# id, x, y, w, h, conf\nf1, 10, 20, 50, 60, 0.9\nf2, 1, 1, 5, 5, 0.4\nf2, 2, 2, 6, 6, 0.8\n")
    assert table["f1"] == [FaceBox(10, 20, 50, 60, 0.9)]
    assert [b.confidence for b in table["f2"]] == [0.8, 0.4]


def test_sidecar_echoes_file(tmp_path):
    path = tmp_path / "det.csv"
    path.write_text("a, 1, 2, 3, 4, 0.5\n")
    assert SidecarDetector.from_file(path)(None, "a") == [FaceBox(1, 2, 3, 4, 0.5)]


def test_sidecar_malformed():
    with pytest.raises(MalformedRow):
        parse_sidecar("f1, 10, 20, 50\n")
    with pytest.raises(MalformedRow):
        parse_sidecar("f1, 10, 20, x, 60, 0.9\n")


def test_sidecar_missing_id_is_flagged(caplog):
    with caplog.at_level(logging.WARNING):
        assert sidecar_detect("nope", {"f1": [FaceBox(0, 0, 1, 1)]}) == []
    assert "MissingFrameId" in caplog.text


def test_select_primary():
    a, b, c = FaceBox(0, 0, 1, 1, 0.5), FaceBox(1, 1, 1, 1, 0.9), FaceBox(2, 2, 1, 1, 0.9)
    assert select_primary([a, b, c]) is b
    assert select_primary([]) is None


def test_full_frame_box():
    f = Frame(np.random.default_rng(0).integers(0, 256, (300, 400, 3), dtype=np.uint8))
    crop = crop_face(f, FaceBox(0, 0, 400, 300))
    assert crop.bbox_features == (0, 0, 1, 1)
    assert crop.image.pixels.shape == (CROP_SIZE, CROP_SIZE, 3)
    assert crop.image == Frame(resize_bilinear(f.pixels, CROP_SIZE, CROP_SIZE))


def test_exact_size_box_is_identity_crop():
    f = Frame(np.random.default_rng(1).integers(0, 256, (480, 640, 3), dtype=np.uint8))
    crop = crop_face(f, FaceBox(100, 50, 227, 227))
    assert np.array_equal(crop.image.pixels, f.pixels[50:277, 100:327])


def test_feature_normalization():
    assert bbox_features(FaceBox(480, 270, 960, 540), 1920, 1080) == (0.25, 0.25, 0.5, 0.5)
    assert bbox_features(FaceBox(480, 270, 960, 540), 1920, 1080, normalize=False) == (480, 270, 960, 540)


def test_overhanging_box_uses_unclamped_features():
    f = Frame.blank(100, 100, (5, 5, 5))
    crop = crop_face(f, FaceBox(-20, 50, 60, 80))
    assert crop.bbox_features == (-0.2, 0.5, 0.6, 0.8)
    assert crop.image.pixels.shape == (CROP_SIZE, CROP_SIZE, 3)


def test_no_intersection():
    with pytest.raises(NoIntersection):
        crop_face(Frame.blank(50, 50), FaceBox(60, 0, 10, 10))


@given(st.floats(-30, 90), st.floats(-30, 90), st.floats(1, 120), st.floats(1, 120))
@settings(max_examples=60, deadline=None)
def test_crop_is_always_227(x, y, w, h):
    f = Frame.blank(100, 100, (9, 9, 9))
    box = FaceBox(x, y, w, h)
    if x + w <= 0 or y + h <= 0 or x >= 100 or y >= 100:
        return
    try:
        crop = crop_face(f, box)
    except NoIntersection:
        return  # sub-pixel slivers round to nothing
    assert crop.image.pixels.shape == (CROP_SIZE, CROP_SIZE, 3)


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 20), st.integers(1, 20), st.integers(1, 8))
def test_features_scale_invariant(x, y, w, h, k):
    a = bbox_features(FaceBox(x, y, w, h), 64, 48)
    b = bbox_features(FaceBox(x * k, y * k, w * k, h * k), 64 * k, 48 * k)
    assert np.allclose(a, b, atol=1e-6)


def test_resize_constant_image_stays_constant():
    img = np.full((13, 31, 3), 77, np.uint8)
    assert (resize_bilinear(img, 227, 227) == 77).all()
