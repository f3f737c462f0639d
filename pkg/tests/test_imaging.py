from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flood_fill_components
from gazetarget import font
from gazetarget.errors import (
    MalformedHeader,
    RegionOutOfBounds,
    TruncatedPixelData,
    UnrecognizedGlyph,
    UnsupportedGlyph,
    UnsupportedMaxval,
)
from gazetarget.imaging import (
    BitMask,
    Frame,
    connected_components,
    decode_ppm,
    draw_text,
    encode_ppm,
    foreground_mask,
    load_ppm,
    read_text,
    save_ppm,
    text_extent,
)


def random_frame(seed, w=64, h=48):
    return Frame(np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8))


# --- PPM ---------------------------------------------------------------------

def test_minimal_white_pixel_file(tmp_path):
    path = tmp_path / "one.ppm"
    save_ppm(Frame.blank(1, 1, (255, 255, 255)), path)
    assert path.read_bytes() == b"P6\n1 1\n255\n\xff\xff\xff"


@pytest.mark.parametrize("seed", range(100))
def test_random_frame_round_trip(tmp_path, seed):
    f = random_frame(seed)
    save_ppm(f, tmp_path / "f.ppm")
    assert load_ppm(tmp_path / "f.ppm") == f


def test_header_comments_and_whitespace():
    data = b"P6 # comment\n2\t1\n# another\n255\n" + bytes(range(6))
    f = decode_ppm(data)
    assert (f.width, f.height) == (2, 1)
    assert f.pixels.tobytes() == bytes(range(6))


@pytest.mark.parametrize(
    "data, err",
    [
        (b"P5\n1 1\n255\n\x00", MalformedHeader),
        (b"P6\n1\n", MalformedHeader),
        (b"P6\n0 1\n255\n", MalformedHeader),
        (b"P6\n2 2\n255\n\x00\x00\x00", TruncatedPixelData),
        (b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", UnsupportedMaxval),
    ],
)
def test_decode_errors(data, err):
    with pytest.raises(err):
        decode_ppm(data)


@given(st.integers(1, 12), st.integers(1, 12), st.binary(min_size=432, max_size=432))
def test_ppm_round_trip_property(w, h, raw):
    pixels = np.frombuffer(raw[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    f = Frame(pixels.copy())
    assert decode_ppm(encode_ppm(f)) == f


def test_frame_is_read_only():
    f = Frame.blank(3, 2)
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1


# --- masks -------------------------------------------------------------------

def test_mask_all_background():
    f = Frame.blank(8, 5, (10, 20, 30))
    assert not foreground_mask(f, (10, 20, 30), 0).bits.any()


def test_mask_tolerance_boundary():
    px = np.full((5, 8, 3), (10, 20, 30), dtype=np.uint8)
    px[2, 3, 1] = 21
    m = foreground_mask(Frame(px), (10, 20, 30), 0)
    assert m.bits.sum() == 1 and m.bits[2, 3]
    assert not foreground_mask(Frame(px), (10, 20, 30), 1).bits.any()


@pytest.mark.parametrize("seed", range(10))
def test_mask_matches_per_pixel_oracle(seed):
    f = random_frame(seed, 20, 15)
    bg, tol = (128, 64, 200), 40
    m = foreground_mask(f, bg, tol)
    for y in range(f.height):
        for x in range(f.width):
            expect = any(abs(int(f.pixels[y, x, c]) - bg[c]) > tol for c in range(3))
            assert m.bits[y, x] == expect


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_zero_tolerance_mask_empty_iff_uniform(seed):
    rng = np.random.default_rng(seed)
    px = np.full((6, 7, 3), 90, dtype=np.uint8)
    if rng.random() < 0.5:
        px[rng.integers(6), rng.integers(7), rng.integers(3)] = rng.integers(0, 90)
    uniform = bool((px == 90).all())
    assert (not foreground_mask(Frame(px), (90, 90, 90), 0).bits.any()) == uniform


# --- connected components ----------------------------------------------------

def test_components_empty_mask():
    assert connected_components(BitMask(np.zeros((4, 4), bool))) == []


def test_single_pixel_component():
    bits = np.zeros((10, 10), bool)
    bits[7, 5] = True
    (c,) = connected_components(BitMask(bits))
    assert (c.label, c.area, c.bbox, c.centroid_px) == (1, 1, (5, 7, 1, 1), (5.0, 7.0))


def test_two_rectangles():
    bits = np.zeros((20, 30), bool)
    bits[2:6, 3:10] = True
    bits[10:18, 15:29] = True
    a, b = connected_components(BitMask(bits))
    assert (a.bbox, a.area, a.centroid_px) == ((3, 2, 7, 4), 28, (6.0, 3.5))
    assert (b.bbox, b.area, b.centroid_px) == ((15, 10, 14, 8), 112, (21.5, 13.5))


def test_diagonal_touch_is_connected():
    bits = np.eye(5, dtype=bool)
    assert len(connected_components(BitMask(bits))) == 1


def test_labels_follow_raster_order_not_run_order():
    # a U shape whose right arm starts on the first row: one component
    bits = np.zeros((4, 5), bool)
    bits[0:4, 0] = True
    bits[0:4, 4] = True
    bits[3, 0:5] = True
    bits[0, 2] = True  # isolated in row 0, between the arms
    comps = connected_components(BitMask(bits))
    assert [c.area for c in comps] == [11, 1]
    assert comps[1].bbox == (2, 0, 1, 1)


def check_against_flood_fill(bits):
    got = connected_components(BitMask(bits))
    ref = flood_fill_components(bits)
    assert len(got) == len(ref)
    for i, (c, (area, bbox, cen, members)) in enumerate(zip(got, ref), 1):
        assert c.label == i
        assert c.area == area
        assert c.bbox == bbox
        assert c.centroid_px == pytest.approx(cen, abs=1e-9)
    assert sum(c.area for c in got) == int(bits.sum())
    # reference components are disjoint by construction; sizes must add up
    assert sum(len(r[3]) for r in ref) == int(bits.sum())


@given(
    st.integers(1, 40),
    st.integers(1, 40),
    st.floats(0.05, 0.7),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=150, deadline=None)
def test_components_match_flood_fill(h, w, density, seed):
    bits = np.random.default_rng(seed).random((h, w)) < density
    check_against_flood_fill(bits)


def test_component_invariants_on_random_mask():
    bits = np.random.default_rng(5).random((64, 64)) < 0.45
    for c in connected_components(BitMask(bits)):
        left, top, w, h = c.bbox
        assert c.area >= 1
        assert left <= c.centroid_px[0] <= left + w - 1
        assert top <= c.centroid_px[1] <= top + h - 1
        sub = bits[top : top + h, left : left + w]
        # tight: every bbox edge row/column holds foreground
        assert sub[0].any() and sub[-1].any() and sub[:, 0].any() and sub[:, -1].any()


# --- text --------------------------------------------------------------------

def test_font_glyphs_are_unique():
    seen = {g.tobytes() for g in font.GLYPHS.values()}
    assert len(seen) == len(font.GLYPHS)
    assert set(font.CHARSET) >= set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789- ")


def test_font_glyph_shapes():
    for ch, g in font.GLYPHS.items():
        assert g.shape == (font.GLYPH_H, font.GLYPH_W), ch
    assert not font.GLYPHS[" "].any()


def test_empty_string_leaves_frame_unchanged():
    f = random_frame(1)
    assert draw_text(f, "", (3, 3), 2, (255, 255, 255)) == f


def test_walter_width():
    assert text_extent("Walter", 2) == (70, 14)
    f = draw_text(Frame.blank(100, 30), "Walter", (5, 5), 2, (255, 255, 255))
    ink = np.argwhere(f.pixels.any(axis=2))
    assert ink[:, 1].min() == 5
    assert ink[:, 1].max() - 5 + 1 <= 70


def test_alison_round_trip():
    f = draw_text(Frame.blank(120, 40, (30, 30, 30)), "Alison", (4, 10), 2, (250, 250, 250))
    assert read_text(f, (4, 10, 100, 14), 2, (250, 250, 250)) == "Alison"


def test_background_region_reads_empty():
    assert read_text(Frame.blank(50, 20), (0, 0, 50, 20), 1, (255, 255, 255)) == ""


def test_draw_touches_only_glyph_cells():
    f = random_frame(3, 80, 40)
    g = draw_text(f, "Ab-9", (10, 12), 2, (1, 2, 3))
    diff = np.argwhere((f.pixels != g.pixels).any(axis=2))
    w, h = text_extent("Ab-9", 2)
    assert diff[:, 1].min() >= 10 and diff[:, 1].max() < 10 + w
    assert diff[:, 0].min() >= 12 and diff[:, 0].max() < 12 + h


def test_draw_clips_outside_frame():
    f = Frame.blank(20, 10)
    g = draw_text(f, "HELLO", (-7, 4), 2, (255, 0, 0))
    assert g.pixels.shape == f.pixels.shape
    assert g.pixels.any()
    assert draw_text(f, "HI", (50, 50), 1, (255, 0, 0)) == f


def test_unsupported_glyph():
    with pytest.raises(UnsupportedGlyph):
        draw_text(Frame.blank(10, 10), "a!b", (0, 0), 1, (255, 255, 255))


def test_unrecognized_glyph():
    px = np.zeros((7, 5, 3), np.uint8)
    px[0, 0] = px[6, 4] = 255
    with pytest.raises(UnrecognizedGlyph):
        read_text(Frame(px), (0, 0, 5, 7), 1, (255, 255, 255))


def test_region_out_of_bounds():
    with pytest.raises(RegionOutOfBounds):
        read_text(Frame.blank(10, 10), (5, 5, 10, 7), 1, (255, 255, 255))


@pytest.mark.parametrize("seed", range(200))
def test_random_strings_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 17))
    text = "".join(rng.choice(list(font.CHARSET), size=n)).strip() or "x"
    scale = int(rng.integers(1, 4))
    w, h = text_extent(text, scale)
    W, H = w + 40, h + 30
    ox, oy = int(rng.integers(0, 40)), int(rng.integers(0, 30))
    f = draw_text(Frame.blank(W, H, (20, 20, 20)), text, (ox, oy), scale, (255, 255, 255))
    assert read_text(f, (ox, oy, W - ox, h), scale, (255, 255, 255)) == text


@given(st.text(alphabet=font.CHARSET, min_size=1, max_size=32), st.integers(1, 4))
@settings(max_examples=100, deadline=None)
def test_round_trip_property(text, scale):
    w, h = text_extent(text, scale)
    f = draw_text(Frame.blank(w + 2, h + 2, (0, 0, 0)), text, (1, 1), scale, (255, 255, 255))
    assert read_text(f, (1, 1, w + 1, h), scale, (255, 255, 255)) == text.rstrip(" ")
