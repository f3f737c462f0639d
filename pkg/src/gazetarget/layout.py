"""Videoconference gallery layouts: screenshot parsing and a synthetic generator.

Parsing follows the usual recipe for a gallery view with a flat background:
mask out the background color, label connected components, keep components
whose aspect ratio is close to 16:9, and take each survivor's centroid. Names
are decoded from a fixed strip at the bottom-left of each cell.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import CalibrationMismatch, LengthMismatch, NoCellsFound, TooManyParticipants, UnrecognizedGlyph
from .geometry import CalibrationProfile, GazePointCm, auto_tau, px_to_cm
from .imaging import RGB, Frame, Rect, connected_components, draw_text, foreground_mask, read_text, text_extent

ASPECT = 16 / 9
DEFAULT_BACKGROUND: RGB = (26, 26, 26)
DEFAULT_TEXT_COLOR: RGB = (255, 255, 255)
MIN_CELL_WIDTH = 32
TOOLBAR_BAND = 64


class LayoutStyle(str, enum.Enum):
    GRID = "grid"  # fullscreen gallery
    STRIP = "strip"  # single full-width row pinned to the top

    @classmethod
    def parse(cls, value: "str | LayoutStyle") -> "LayoutStyle":
        if isinstance(value, LayoutStyle):
            return value
        aliases = {"fullscreen": cls.GRID, "fullscreengrid": cls.GRID, "horizontal": cls.STRIP, "horizontalstrip": cls.STRIP}
        v = value.lower()
        return aliases.get(v) or cls(v)


@dataclass(frozen=True)
class TargetCell:
    index: int  # 1-based
    centroid_cm: GazePointCm
    bbox_px: Rect
    name: str
    centroid_px: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class LayoutMap:
    cells: tuple[TargetCell, ...]
    tau_cm: float
    calibration: CalibrationProfile

    def centroids(self) -> list[tuple[float, float]]:
        return [(c.centroid_cm.x, c.centroid_cm.y) for c in self.cells]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.cells]

    def with_tau(self, tau_cm: float) -> "LayoutMap":
        return replace(self, tau_cm=tau_cm)


@dataclass(frozen=True)
class LayoutSpec:
    n_participants: int
    style: LayoutStyle = LayoutStyle.GRID
    names: tuple[str, ...] = ()
    background_color: RGB = DEFAULT_BACKGROUND
    calibration: CalibrationProfile = field(default_factory=CalibrationProfile)
    gutter: int = 4
    decorations: bool = False
    text_color: RGB = DEFAULT_TEXT_COLOR

    def __post_init__(self):
        object.__setattr__(self, "style", LayoutStyle.parse(self.style))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"User{i + 1}" for i in range(self.n_participants)))
        if len(self.names) != self.n_participants:
            raise LengthMismatch(f"{len(self.names)} names for {self.n_participants} participants")


# ---------------------------------------------------------------------------
# shared cell conventions

def aspect_ok(w: int, h: int, ar_tolerance: float) -> bool:
    return h > 0 and abs((w / h) / ASPECT - 1) <= ar_tolerance


def name_placement(bbox: Rect, name_frac: float = 0.10) -> tuple[tuple[int, int], int, Rect]:
    """Text origin, glyph scale and read region for a cell's name strip."""
    left, top, w, h = bbox
    strip_h = max(9, round(name_frac * h))
    scale = max(1, (strip_h - 2) // 7)
    ox = left + max(2, scale)
    oy = top + h - strip_h + (strip_h - 7 * scale) // 2
    return (ox, oy), scale, (ox, oy, left + w - ox, 7 * scale)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def cell_boxes(spec: LayoutSpec) -> list[Rect]:
    """Cell rectangles in row-major order.

    Columns split the screen width into equal slots with each cell centered
    in its slot; rows are packed one gutter apart and the block is centered
    vertically (the strip is pinned to the top). A partial last row is
    centered horizontally.
    """
    cal = spec.calibration
    n, g = spec.n_participants, spec.gutter
    width = cal.screen_w_px
    avail_h = cal.screen_h_px - (TOOLBAR_BAND if spec.decorations else 0)
    if spec.style is LayoutStyle.STRIP:
        if n < 3:
            raise ValueError("the horizontal strip layout needs at least 3 participants")
        cols, rows = n, 1
        cell_w = math.floor(width / n - g)
    else:
        if n < 2:
            raise ValueError("the grid layout needs at least 2 participants")
        cols = math.ceil(math.sqrt(n))
        rows = math.ceil(n / cols)
        cell_w = min(math.floor(width / cols - g), math.floor((avail_h / rows - g) * ASPECT))
    cell_h = math.floor(cell_w / ASPECT)
    if cell_w < MIN_CELL_WIDTH:
        raise TooManyParticipants(f"{n} participants leave cells {cell_w} px wide")

    slot_w = width / cols
    pitch_y = cell_h + g
    block_top = g / 2 if spec.style is LayoutStyle.STRIP else (avail_h - rows * pitch_y) / 2 + g / 2
    boxes = []
    for r in range(rows):
        in_row = min(cols, n - r * cols)
        shift = (cols - in_row) * slot_w / 2
        top = _round_half_up(block_top + r * pitch_y)
        for c in range(in_row):
            cx = shift + (c + 0.5) * slot_w
            boxes.append((_round_half_up(cx - cell_w / 2), top, cell_w, cell_h))
    return boxes


def _cell_texture(index: int, w: int, h: int) -> np.ndarray:
    """Deterministic stand-in for participant video; channels stay within [40, 220]."""
    rng = np.random.default_rng(1000 + index)
    base = rng.integers(70, 190, size=3)
    yy, xx = np.mgrid[0:h, 0:w]
    wave = 25 * np.sin(xx / (7 + index)) * np.cos(yy / (11 + index))
    img = base[None, None, :] + wave[..., None] + rng.integers(-8, 9, size=(h, w, 1))
    return np.clip(img, 40, 220).astype(np.uint8)


def generate_screenshot(spec: LayoutSpec) -> tuple[Frame, LayoutMap]:
    cal = spec.calibration
    pixels = np.empty((cal.screen_h_px, cal.screen_w_px, 3), dtype=np.uint8)
    pixels[...] = spec.background_color
    boxes = cell_boxes(spec)
    for i, (left, top, w, h) in enumerate(boxes):
        pixels[top : top + h, left : left + w] = _cell_texture(i, w, h)
    if spec.decorations:
        band_top = cal.screen_h_px - TOOLBAR_BAND
        tb_w, tb_h = min(300, cal.screen_w_px // 2), 50
        tl = (cal.screen_w_px - tb_w) // 2
        pixels[band_top + 7 : band_top + 7 + tb_h, tl : tl + tb_w] = (60, 60, 64)
        pixels[band_top + 12 : band_top + 52, 40:80] = (200, 40, 40)

    frame = Frame(pixels)
    cells = []
    for i, (box, name) in enumerate(zip(boxes, spec.names)):
        origin, scale, region = name_placement(box)
        tw, _ = text_extent(name, scale)
        if tw > region[2]:
            raise ValueError(f"name {name!r} does not fit a {box[2]} px cell at scale {scale}")
        frame = draw_text(frame, name, origin, scale, spec.text_color)
        left, top, w, h = box
        cpx = (left + (w - 1) / 2, top + (h - 1) / 2)
        cells.append(TargetCell(i + 1, px_to_cm(cpx, cal), box, name, cpx))
    return frame, LayoutMap(tuple(cells), auto_tau(boxes, cal), cal)


# ---------------------------------------------------------------------------
# parsing

def _row_major(items: list[tuple[tuple[float, float], Rect]]) -> list[tuple[tuple[float, float], Rect]]:
    if not items:
        return items
    min_h = min(b[3] for _, b in items)
    by_y = sorted(items, key=lambda it: (it[0][1], it[0][0]))
    rows: list[list] = [[by_y[0]]]
    for it in by_y[1:]:
        if it[0][1] - rows[-1][0][0][1] > min_h / 2:
            rows.append([it])
        else:
            rows[-1].append(it)
    return [it for row in rows for it in sorted(row, key=lambda it: it[0][0])]


def parse_screenshot(
    frame: Frame,
    cal: CalibrationProfile,
    background_color: RGB = DEFAULT_BACKGROUND,
    tolerance: int = 8,
    ar_tolerance: float = 0.10,
    text_color: RGB = DEFAULT_TEXT_COLOR,
    labels: Sequence[str] | None = None,
    tau_cm: float | None = None,
    min_cell_width: int = MIN_CELL_WIDTH,
) -> LayoutMap:
    if (frame.width, frame.height) != (cal.screen_w_px, cal.screen_h_px):
        raise CalibrationMismatch(
            f"frame is {frame.width}x{frame.height}, calibration expects {cal.screen_w_px}x{cal.screen_h_px}"
        )
    mask = foreground_mask(frame, background_color, tolerance)
    kept = [
        (c.centroid_px, c.bbox)
        for c in connected_components(mask)
        if c.bbox[2] >= min_cell_width and aspect_ok(c.bbox[2], c.bbox[3], ar_tolerance)
    ]
    if not kept:
        raise NoCellsFound("no 16:9 components in screenshot")

    cells = []
    for i, (cpx, box) in enumerate(_row_major(kept), 1):
        _, scale, region = name_placement(box)
        try:
            name = read_text(frame, region, scale, text_color)
        except UnrecognizedGlyph:
            name = ""
        cells.append(TargetCell(i, px_to_cm(cpx, cal), box, name or f"cell-{i}", cpx))
    tau = auto_tau([c.bbox_px for c in cells], cal) if tau_cm is None else tau_cm
    lmap = LayoutMap(tuple(cells), tau, cal)
    if labels is not None:
        lmap = attach_labels(lmap, labels)
    return lmap


def attach_labels(lmap: LayoutMap, labels: Sequence[str]) -> LayoutMap:
    if len(labels) != len(lmap.cells):
        raise LengthMismatch(f"{len(labels)} labels for {len(lmap.cells)} cells")
    return replace(lmap, cells=tuple(replace(c, name=name) for c, name in zip(lmap.cells, labels)))


def read_labels(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def write_labels(labels: Sequence[str], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{name}\n" for name in labels)


# ---------------------------------------------------------------------------
# record export: header comments carry tau and calibration, then one cell per line

def layout_to_text(lmap: LayoutMap) -> str:
    lines = [f"# tau_cm = {lmap.tau_cm!r}"]
    lines += [f"# {line}" for line in lmap.calibration.to_text().splitlines()]
    for c in lmap.cells:
        left, top, w, h = c.bbox_px
        lines.append(f"{c.index}, {c.centroid_cm.x!r}, {c.centroid_cm.y!r}, {left}, {top}, {w}, {h}, {c.name}")
    return "\n".join(lines) + "\n"


def layout_from_text(text: str, cal: CalibrationProfile | None = None) -> LayoutMap:
    header, cells = [], []
    tau = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "tau_cm":
                tau = float(value)
            elif value:
                header.append(line[1:].strip())
            continue
        parts = [p.strip() for p in line.split(",", 7)]
        if len(parts) != 8:
            raise ValueError(f"bad layout record: {raw!r}")
        idx, cx, cy, left, top, w, h, name = parts
        box = (int(left), int(top), int(w), int(h))
        cells.append(TargetCell(int(idx), GazePointCm(float(cx), float(cy)), box, name,
                                (box[0] + (box[2] - 1) / 2, box[1] + (box[3] - 1) / 2)))
    if cal is None:
        cal = CalibrationProfile.from_text("\n".join(header)) if header else CalibrationProfile()
    if tau is None:
        tau = auto_tau([c.bbox_px for c in cells], cal) if cells else 0.0
    return LayoutMap(tuple(cells), tau, cal)


def save_layout(lmap: LayoutMap, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(layout_to_text(lmap))


def load_layout(path: str | os.PathLike, cal: CalibrationProfile | None = None) -> LayoutMap:
    with open(path, encoding="utf-8") as fh:
        return layout_from_text(fh.read(), cal)
