"""Face detection front end: detectors, primary-face selection and the
227x227 crop plus bounding-box feature vector fed to the regressor."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import MalformedRow, NoIntersection
from .imaging import RGB, Frame

log = logging.getLogger(__name__)

CROP_SIZE = 227
HEAD_KEY_COLOR: RGB = (255, 0, 255)


@dataclass(frozen=True)
class FaceBox:
    x_b: float
    y_b: float
    w: float
    h: float
    confidence: float = 1.0


@dataclass(frozen=True)
class FaceCrop:
    image: Frame  # CROP_SIZE x CROP_SIZE
    bbox_features: tuple[float, float, float, float]


class Detector(Protocol):
    """Anything that maps a frame to face boxes sorted by confidence, highest first.

    Detectors that work at a reduced resolution (e.g. 300x300) must map
    boxes back to source-frame pixels.
    """

    def __call__(self, frame: Frame, frame_id: str | None = None) -> list[FaceBox]: ...


def select_primary(boxes: Sequence[FaceBox]) -> FaceBox | None:
    """Highest-confidence box; the earliest one wins ties."""
    best = None
    for b in boxes:
        if best is None or b.confidence > best.confidence:
            best = b
    return best


def synthetic_detect(frame: Frame, head_key_color: RGB = HEAD_KEY_COLOR) -> list[FaceBox]:
    """Tight box around pixels of the renderer's reserved head key color."""
    px = frame.pixels
    r, g, b = head_key_color
    hit = (px[..., 0] == r) & (px[..., 1] == g) & (px[..., 2] == b)
    ys = np.flatnonzero(hit.any(axis=1))
    if ys.size == 0:
        return []
    xs = np.flatnonzero(hit.any(axis=0))
    return [FaceBox(float(xs[0]), float(ys[0]), float(xs[-1] - xs[0] + 1), float(ys[-1] - ys[0] + 1), 1.0)]


class SyntheticDetector:
    def __init__(self, head_key_color: RGB = HEAD_KEY_COLOR):
        self.head_key_color = head_key_color

    def __call__(self, frame: Frame, frame_id: str | None = None) -> list[FaceBox]:
        return synthetic_detect(frame, self.head_key_color)


def parse_sidecar(text: str) -> dict[str, list[FaceBox]]:
    """Rows of ``frame_id, x_b, y_b, w, h, confidence``; ``#`` starts a comment."""
    table: dict[str, list[FaceBox]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 6:
            raise MalformedRow(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            x, y, w, h, conf = (float(v) for v in fields[1:])
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric field in {raw!r}") from None
        if w < 1 or h < 1 or not all(map(math.isfinite, (x, y, w, h, conf))):
            raise MalformedRow(f"line {lineno}: bad box {raw!r}")
        table.setdefault(fields[0], []).append(FaceBox(x, y, w, h, conf))
    for boxes in table.values():
        boxes.sort(key=lambda b: -b.confidence)  # stable: file order among equals
    return table


class SidecarDetector:
    """Replays detections recorded offline by an external face detector."""

    def __init__(self, table: dict[str, list[FaceBox]]):
        self.table = table

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SidecarDetector":
        with open(path, encoding="utf-8") as fh:
            return cls(parse_sidecar(fh.read()))

    def __call__(self, frame: Frame | None, frame_id: str | None = None) -> list[FaceBox]:
        return sidecar_detect(frame_id, self.table)


def sidecar_detect(frame_id: str | None, table: dict[str, list[FaceBox]]) -> list[FaceBox]:
    boxes = table.get(frame_id) if frame_id is not None else None
    if boxes is None:
        log.warning("MissingFrameId: no sidecar detections for frame %r", frame_id)
        return []
    return list(boxes)


def bbox_features(box: FaceBox, frame_w: int, frame_h: int, normalize: bool = True) -> tuple[float, float, float, float]:
    if not normalize:
        return (box.x_b, box.y_b, box.w, box.h)
    return (box.x_b / frame_w, box.y_b / frame_h, box.w / frame_w, box.h / frame_h)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize of an (h, w, c) uint8 array."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, fy = axis(h, out_h)
    x0, x1, fx = axis(w, out_w)
    # separable: rows first, then columns, in float32
    f = img.astype(np.float32)
    fy = fy.astype(np.float32)[:, None, None]
    fx = fx.astype(np.float32)[None, :, None]
    rows = f[y0] * (1 - fy) + f[y1] * fy
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    return np.floor(out + 0.5).astype(np.uint8)


def crop_face(frame: Frame, box: FaceBox, size: int = CROP_SIZE, normalize_bbox: bool = True) -> FaceCrop:
    """Crop ``box`` (clamped to the frame) and resize it to ``size`` x ``size``.

    The bbox features come from the unclamped box.
    """
    x0 = max(0, math.floor(box.x_b))
    y0 = max(0, math.floor(box.y_b))
    x1 = min(frame.width, math.ceil(box.x_b + box.w))
    y1 = min(frame.height, math.ceil(box.y_b + box.h))
    if x0 >= x1 or y0 >= y1:
        raise NoIntersection(f"box {box} does not intersect the {frame.width}x{frame.height} frame")
    img = resize_bilinear(frame.pixels[y0:y1, x0:x1], size, size)
    return FaceCrop(Frame(img), bbox_features(box, frame.width, frame.height, normalize_bbox))
