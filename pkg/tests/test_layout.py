from __future__ import annotations

import math

import numpy as np
import pytest

from gazetarget.errors import CalibrationMismatch, LengthMismatch, NoCellsFound, TooManyParticipants
from gazetarget.geometry import CalibrationProfile, px_to_cm
from gazetarget.imaging import Frame
from gazetarget.layout import (
    LayoutSpec,
    LayoutStyle,
    aspect_ok,
    attach_labels,
    cell_boxes,
    generate_screenshot,
    layout_from_text,
    layout_to_text,
    load_layout,
    parse_screenshot,
    read_labels,
    save_layout,
    write_labels,
)

CAL = CalibrationProfile()
BG = (26, 26, 26)


def random_names(rng, n):
    alphabet = list("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-")
    return tuple("".join(rng.choice(alphabet, size=int(rng.integers(1, 9)))) for _ in range(n))


def test_grid_four_quarter_centers():
    _, lmap = generate_screenshot(LayoutSpec(4, LayoutStyle.GRID))
    expect = [(479.5, 269.5), (1439.5, 269.5), (479.5, 809.5), (1439.5, 809.5)]
    for c, (ex, ey) in zip(lmap.cells, expect):
        assert c.centroid_px == pytest.approx((ex, ey), abs=1.0)


def test_grid_five_rows_of_three_and_two_centered():
    boxes = cell_boxes(LayoutSpec(5, "grid"))
    tops = sorted({b[1] for b in boxes})
    assert len(tops) == 2
    first = [b for b in boxes if b[1] == tops[0]]
    second = [b for b in boxes if b[1] == tops[1]]
    assert len(first) == 3 and len(second) == 2
    mid = (second[0][0] + second[-1][0] + second[-1][2]) / 2
    assert mid == pytest.approx(1920 / 2, abs=1)


def test_strip_three_cells_width_and_pinned_top():
    boxes = cell_boxes(LayoutSpec(3, "strip"))
    assert [(b[2], b[3]) for b in boxes] == [(636, 357)] * 3
    assert all(b[1] <= 4 for b in boxes)


@pytest.mark.parametrize("n", range(2, 9))
@pytest.mark.parametrize("style", ["grid", "strip"])
def test_cells_are_16_9_with_gutters(n, style):
    if style == "strip" and n < 3:
        pytest.skip("strip starts at 3")
    boxes = cell_boxes(LayoutSpec(n, style))
    assert len(boxes) == n
    for l, t, w, h in boxes:
        assert h == math.floor(w * 9 / 16)
        assert aspect_ok(w, h, 0.01)
        assert l >= 0 and t >= 0 and l + w <= 1920 and t + h <= 1080
    # gutters: no two cells closer than 4 px
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            gap_x = max(b[0] - (a[0] + a[2]), a[0] - (b[0] + b[2]))
            gap_y = max(b[1] - (a[1] + a[3]), a[1] - (b[1] + b[3]))
            assert max(gap_x, gap_y) >= 4


def test_strip_needs_three_and_too_many_participants():
    with pytest.raises(ValueError):
        generate_screenshot(LayoutSpec(2, "strip"))
    with pytest.raises(TooManyParticipants):
        cell_boxes(LayoutSpec(70, "strip"))


def test_generator_is_deterministic():
    spec = LayoutSpec(6, "grid", names=tuple("ABCDEF"))
    assert generate_screenshot(spec)[0] == generate_screenshot(spec)[0]


def test_ground_truth_centroids_match_calibration():
    _, lmap = generate_screenshot(LayoutSpec(5, "grid"))
    for c in lmap.cells:
        l, t, w, h = c.bbox_px
        assert c.centroid_cm == px_to_cm((l + (w - 1) / 2, t + (h - 1) / 2), CAL)


@pytest.mark.parametrize("n", [2, 4, 5, 7])
@pytest.mark.parametrize("style", ["grid", "strip"])
@pytest.mark.parametrize("seed", range(3))
def test_parse_round_trip(n, style, seed):
    if style == "strip" and n < 3:
        pytest.skip("strip starts at 3")
    names = random_names(np.random.default_rng(seed), n)
    frame, truth = generate_screenshot(LayoutSpec(n, style, names, decorations=seed % 2 == 1))
    parsed = parse_screenshot(frame, CAL, BG)
    assert len(parsed.cells) == n
    for p, t in zip(parsed.cells, truth.cells):
        assert math.dist(p.centroid_px, t.centroid_px) <= 1.0
        assert p.name == t.name
        assert p.bbox_px == t.bbox_px
    assert [c.index for c in parsed.cells] == list(range(1, n + 1))


def test_toolbar_excluded_by_aspect_filter():
    frame, _ = generate_screenshot(LayoutSpec(4, "grid", decorations=True))
    toolbar = np.all(frame.pixels == (60, 60, 64), axis=2)
    ys, xs = np.nonzero(toolbar)
    assert (xs.max() - xs.min() + 1, ys.max() - ys.min() + 1) == (300, 50)
    assert not aspect_ok(300, 50, 0.10)
    assert len(parse_screenshot(frame, CAL, BG).cells) == 4


def test_parse_keeps_only_16_9_components():
    frame, _ = generate_screenshot(LayoutSpec(6, "strip", decorations=True))
    for c in parse_screenshot(frame, CAL, BG).cells:
        assert aspect_ok(c.bbox_px[2], c.bbox_px[3], 0.10)


def test_all_background_has_no_cells():
    with pytest.raises(NoCellsFound):
        parse_screenshot(Frame.blank(1920, 1080, BG), CAL, BG)


def test_calibration_mismatch():
    with pytest.raises(CalibrationMismatch):
        parse_screenshot(Frame.blank(640, 480, BG), CAL, BG)


def test_unreadable_name_falls_back():
    frame, truth = generate_screenshot(LayoutSpec(4, "grid"))
    px = frame.copy_pixels()
    (ox, oy) = truth.cells[1].bbox_px[:2]
    l, t, w, h = truth.cells[1].bbox_px
    # smear a text-colored blob over the name strip of cell 2
    px[t + h - 12 : t + h - 4, l + 3 : l + 9] = (255, 255, 255)
    parsed = parse_screenshot(Frame(px), CAL, BG)
    assert parsed.cells[1].name == "cell-2"
    assert parsed.cells[0].name == truth.cells[0].name


def test_row_major_order_independent_of_label_order():
    frame, truth = generate_screenshot(LayoutSpec(7, "grid"))
    parsed = parse_screenshot(frame, CAL, BG)
    cents = [c.centroid_px for c in parsed.cells]
    rows = [cents[0:3], cents[3:6], cents[6:]]
    for row in rows:
        assert [x for x, _ in row] == sorted(x for x, _ in row)
    assert rows[0][0][1] < rows[1][0][1] < rows[2][0][1]


def test_attach_labels(tmp_path):
    frame, truth = generate_screenshot(LayoutSpec(4, "grid"))
    parsed = parse_screenshot(frame, CAL, BG)
    assert attach_labels(parsed, parsed.names) == parsed
    with pytest.raises(LengthMismatch):
        attach_labels(parsed, ["a", "b", "c"])
    write_labels(["Ann", "Bo", "Cy", "Di"], tmp_path / "labels.txt")
    labels = read_labels(tmp_path / "labels.txt")
    assert attach_labels(parsed, labels).names == ["Ann", "Bo", "Cy", "Di"]
    assert parse_screenshot(frame, CAL, BG, labels=labels).names == labels


def test_layout_record_round_trip(tmp_path):
    _, lmap = generate_screenshot(LayoutSpec(5, "strip", names=("a", "b c", "d", "e", "f")))
    save_layout(lmap, tmp_path / "layout.txt")
    back = load_layout(tmp_path / "layout.txt")
    assert back == lmap
    line = layout_to_text(lmap).splitlines()[-5]
    assert line.startswith("1, ") and line.count(",") == 7
    assert layout_from_text(layout_to_text(lmap)) == lmap
