"""Pixel-level primitives: the RGB raster type, binary PPM I/O, background
masking, connected-component labeling and bitmap-font text."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import font
from .errors import (
    MalformedHeader,
    RegionOutOfBounds,
    TruncatedPixelData,
    UnrecognizedGlyph,
    UnsupportedGlyph,
    UnsupportedMaxval,
)

RGB = tuple[int, int, int]
Rect = tuple[int, int, int, int]  # left, top, width, height


class Frame:
    """Owned 8-bit RGB raster, stored as a read-only (height, width, 3) array."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.array(pixels, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a (h, w, 3) array with h, w >= 1, got {arr.shape}")
        arr.setflags(write=False)
        self._pixels = arr

    @classmethod
    def blank(cls, width: int, height: int, color: RGB = (0, 0, 0)) -> "Frame":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = color
        return cls(arr)

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    def copy_pixels(self) -> np.ndarray:
        return self._pixels.copy()

    def tobytes(self) -> bytes:
        return self._pixels.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels)
        )

    def __hash__(self) -> int:
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"Frame({self.width}x{self.height})"


@dataclass(frozen=True)
class BitMask:
    bits: np.ndarray  # (height, width) bool

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: Rect
    centroid_px: tuple[float, float]


# ---------------------------------------------------------------------------
# PPM

def encode_ppm(frame: Frame) -> bytes:
    return b"P6\n%d %d\n255\n" % (frame.width, frame.height) + frame.tobytes()


def decode_ppm(data: bytes) -> Frame:
    pos = 0
    n = len(data)

    def token() -> bytes:
        nonlocal pos
        while pos < n:
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader("unexpected end of header")
        return data[start:pos]

    if data[:2] != b"P6":
        raise MalformedHeader(f"not a binary PPM (magic {data[:2]!r})")
    pos = 2
    try:
        width, height, maxval = (int(token()) for _ in range(3))
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 supported)")
    if pos >= n or not data[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    need = width * height * 3
    body = data[pos : pos + need]
    if len(body) < need:
        raise TruncatedPixelData(f"expected {need} pixel bytes, got {len(body)}")
    return Frame(np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3))


def load_ppm(path: str | os.PathLike) -> Frame:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def save_ppm(frame: Frame, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame))


# ---------------------------------------------------------------------------
# masking and components

def foreground_mask(frame: Frame, background_color: RGB, tolerance: int = 0) -> BitMask:
    """True where any channel differs from ``background_color`` by more than ``tolerance``."""
    diff = np.abs(frame.pixels.astype(np.int16) - np.asarray(background_color, dtype=np.int16))
    return BitMask(np.any(diff > tolerance, axis=2))


def _row_runs(bits: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Horizontal runs of True, in raster order: (row, start, end_inclusive)."""
    h, w = bits.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = bits
    d = np.diff(padded, axis=1)
    rs, starts = np.nonzero(d == 1)
    re, ends = np.nonzero(d == -1)
    # nonzero walks row-major, so starts and ends pair up in order
    assert np.array_equal(rs, re)
    return rs, starts, ends - 1


def connected_components(mask: BitMask) -> list[Component]:
    """8-connected components via run-length union-find.

    Labels follow raster order of each component's first pixel.
    """
    rows, starts, ends = _row_runs(np.asarray(mask.bits, dtype=bool))
    nruns = len(rows)
    if nruns == 0:
        return []
    parent = list(range(nruns))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    row_first = np.searchsorted(rows, np.arange(mask.height + 1))
    starts_l, ends_l = starts.tolist(), ends.tolist()
    for r in range(1, mask.height):
        a0, a1 = row_first[r - 1], row_first[r]
        b0, b1 = row_first[r], row_first[r + 1]
        i, j = a0, b0
        while i < a1 and j < b1:
            # runs touch under 8-connectivity when their column spans overlap after widening by one
            if starts_l[i] <= ends_l[j] + 1 and starts_l[j] <= ends_l[i] + 1:
                ri, rj = find(i), find(j)
                if ri != rj:
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
            if ends_l[i] < ends_l[j]:
                i += 1
            else:
                j += 1

    roots = [find(i) for i in range(nruns)]
    label_of_root: dict[int, int] = {}
    labels = np.empty(nruns, dtype=np.int64)
    for k, root in enumerate(roots):
        lab = label_of_root.get(root)
        if lab is None:
            lab = len(label_of_root) + 1
            label_of_root[root] = lab
        labels[k] = lab

    nlab = len(label_of_root) + 1
    lengths = (ends - starts + 1).astype(np.float64)
    area = np.bincount(labels, weights=lengths, minlength=nlab)
    sum_x = np.bincount(labels, weights=lengths * (starts + ends) / 2.0, minlength=nlab)
    sum_y = np.bincount(labels, weights=lengths * rows, minlength=nlab)
    left = np.full(nlab, np.iinfo(np.int64).max)
    right = np.full(nlab, -1)
    top = np.full(nlab, np.iinfo(np.int64).max)
    bottom = np.full(nlab, -1)
    np.minimum.at(left, labels, starts)
    np.maximum.at(right, labels, ends)
    np.minimum.at(top, labels, rows)
    np.maximum.at(bottom, labels, rows)

    out = []
    for lab in range(1, nlab):
        a = int(area[lab])
        out.append(
            Component(
                label=lab,
                area=a,
                bbox=(int(left[lab]), int(top[lab]), int(right[lab] - left[lab] + 1), int(bottom[lab] - top[lab] + 1)),
                centroid_px=(float(sum_x[lab] / a), float(sum_y[lab] / a)),
            )
        )
    return out


# ---------------------------------------------------------------------------
# text

def text_extent(text: str, scale: int) -> tuple[int, int]:
    """Pixel (width, height) covered by ``text`` at ``scale``."""
    if not text:
        return 0, 0
    return (len(text) * font.ADVANCE - 1) * scale, font.GLYPH_H * scale


def draw_text(frame: Frame, text: str, origin: tuple[int, int], scale: int, color: RGB) -> Frame:
    """Render ``text`` with its top-left glyph corner at ``origin``; off-frame pixels are clipped."""
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    bad = [ch for ch in text if font.glyph(ch) is None]
    if bad:
        raise UnsupportedGlyph(f"characters not in font: {''.join(sorted(set(bad)))!r}")
    if not text:
        return frame
    ink = np.zeros((font.GLYPH_H, len(text) * font.ADVANCE), dtype=bool)
    for k, ch in enumerate(text):
        ink[:, k * font.ADVANCE : k * font.ADVANCE + font.GLYPH_W] = font.GLYPHS[ch]
    ink = np.kron(ink, np.ones((scale, scale), dtype=bool))

    x0, y0 = origin
    h, w = ink.shape
    fx0, fy0 = max(x0, 0), max(y0, 0)
    fx1, fy1 = min(x0 + w, frame.width), min(y0 + h, frame.height)
    if fx0 >= fx1 or fy0 >= fy1:
        return frame
    pixels = frame.copy_pixels()
    sub = ink[fy0 - y0 : fy1 - y0, fx0 - x0 : fx1 - x0]
    pixels[fy0:fy1, fx0:fx1][sub] = color
    return Frame(pixels)


def read_text(frame: Frame, region: Rect, scale: int, text_color: RGB) -> str:
    """Decode text whose first glyph cell starts at the region's top-left corner.

    Cells are read left to right while a whole glyph fits in the region; a cell
    with no ink reads as a space. Trailing spaces are stripped.
    """
    left, top, width, height = region
    if width < 0 or height < 0 or left < 0 or top < 0 or left + width > frame.width or top + height > frame.height:
        raise RegionOutOfBounds(f"region {region} outside {frame.width}x{frame.height} frame")
    gh, gw = font.GLYPH_H * scale, font.GLYPH_W * scale
    if height < gh:
        return ""
    sub = frame.pixels[top : top + gh, left : left + width]
    on = np.all(sub == np.asarray(text_color, dtype=np.uint8), axis=2)
    chars = []
    x = 0
    while x + gw <= width:
        cell = on[:, x : x + gw]
        bits = cell[::scale, ::scale]
        ch = font.match(bits)
        if ch is None:
            raise UnrecognizedGlyph(f"no glyph matches cell at x={left + x}")
        chars.append(ch)
        x += font.ADVANCE * scale
    return "".join(chars).rstrip(" ")
