"""Synthetic gaze dataset.

A deterministic renderer draws a cartoon head whose pupils shift with the
gaze point, relative to a bias that depends on where the head sits in the
frame. Gaze can therefore only be recovered from the face image and the
bounding box together. Records follow the usual capture schema: a 227x227
face crop on disk, the face box, the gaze point in cm and a location index.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .config import format_kv, parse_kv
from .errors import EmptyDataset, EmptySplit, HeadOutOfFrame
from .facedet import CROP_SIZE, HEAD_KEY_COLOR, FaceBox, bbox_features, crop_face
from .geometry import CalibrationProfile, GazePointCm
from .imaging import Frame, load_ppm, save_ppm

GRID_COLS, GRID_ROWS = 13, 7
FRAME_W, FRAME_H = 640, 480
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.80, 0.15, 0.05)


# ---------------------------------------------------------------------------
# gaze locations

def build_location_table(cal: CalibrationProfile) -> dict[int, GazePointCm]:
    """13 x 7 grid of gaze targets with half-pitch margins, in cm from the camera.

    Indices run 1..91 in row-major order.
    """
    cam_x, cam_y = cal.camera_cm
    px, py = cal.screen_w_cm / GRID_COLS, cal.screen_h_cm / GRID_ROWS
    table = {}
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS):
            table[r * GRID_COLS + c + 1] = GazePointCm((c + 0.5) * px - cam_x, (r + 0.5) * py - cam_y)
    return table


# ---------------------------------------------------------------------------
# renderer

@dataclass(frozen=True)
class RendererParams:
    """Geometry of the synthetic head, all relative to head width unless noted."""

    frame_w: int = FRAME_W
    frame_h: int = FRAME_H
    head_aspect: float = 1.25  # ellipse height / width
    eye_dx: float = 0.21
    eye_dy: float = -0.08
    eye_radius: float = 0.15
    pupil_radius: float = 0.35  # fraction of eye radius
    max_offset: float = 0.5  # pupil shift in eye radii at the max horizontal gaze
    max_gaze_cm: float = 34.92  # gaze x giving max_offset for a centered head
    bias_x_cm: float = 8.0  # head-position bias per unit of normalized frame offset
    bias_y_cm: float = 6.0
    ring_px: int = 3

    @property
    def gain(self) -> float:
        return self.max_offset / self.max_gaze_cm

    def head_bias(self, box: FaceBox) -> tuple[float, float]:
        cx = (box.x_b + box.w / 2) / self.frame_w - 0.5
        cy = (box.y_b + box.h / 2) / self.frame_h - 0.5
        return self.bias_x_cm * cx, self.bias_y_cm * cy

    def to_dict(self) -> dict[str, object]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class HeadState:
    cx: float  # head center, frame px
    cy: float
    width: float  # head width, px
    skin: tuple[int, int, int] = (222, 178, 146)


def _coverage(dist: np.ndarray, radius: float) -> np.ndarray:
    """Approximate pixel coverage of a disk edge for anti-aliasing."""
    return np.clip(radius - dist + 0.5, 0.0, 1.0)


def pupil_offsets(gaze: GazePointCm, box: FaceBox, rp: RendererParams) -> tuple[float, float]:
    """Pupil displacement in eye radii: an affine function of gaze minus head bias."""
    bx, by = rp.head_bias(box)
    return rp.gain * (gaze.x - bx), rp.gain * (gaze.y - by)


def render_sample(
    gaze: GazePointCm, head: HeadState, noise_seed: int, rp: RendererParams = RendererParams()
) -> tuple[Frame, FaceBox]:
    """Deterministic frame of a head looking at ``gaze`` plus its ground-truth box."""
    rng = np.random.default_rng(noise_seed)
    w, h = rp.frame_w, rp.frame_h
    base = rng.integers(70, 150)
    yy, xx = np.mgrid[0:h, 0:w]
    bg = base + 20 * np.sin(xx / 37.0 + rng.uniform(0, 6.28)) * np.cos(yy / 53.0) + rng.integers(-12, 13, size=(h, w))
    img = np.repeat(np.clip(bg, 0, 255)[..., None], 3, axis=2).astype(np.float64)

    a, b = head.width / 2, head.width * rp.head_aspect / 2
    if head.cx - a < 0 or head.cy - b < 0 or head.cx + a > w or head.cy + b > h:
        raise HeadOutOfFrame(f"head at ({head.cx}, {head.cy}) width {head.width} leaves the {w}x{h} frame")
    x0, y0 = max(0, int(head.cx - a) - 1), max(0, int(head.cy - b) - 1)
    x1, y1 = min(w, int(head.cx + a) + 2), min(h, int(head.cy + b) + 2)
    sub_y, sub_x = yy[y0:y1, x0:x1] + 0.5, xx[y0:y1, x0:x1] + 0.5
    sub = img[y0:y1, x0:x1]

    # elliptic radius: <= 1 inside the head
    er = np.hypot((sub_x - head.cx) / a, (sub_y - head.cy) / b)
    inside = er <= 1.0
    box = _tight_box(inside, x0, y0)
    skin = np.asarray(head.skin, dtype=np.float64) + rng.integers(-3, 4, size=sub.shape[:2] + (1,))
    sub[inside] = skin[inside]

    off_x, off_y = pupil_offsets(gaze, box, rp)
    r_eye = rp.eye_radius * head.width
    r_pupil = rp.pupil_radius * r_eye
    for side in (-1, 1):
        ex, ey = head.cx + side * rp.eye_dx * head.width, head.cy + rp.eye_dy * head.width
        d_eye = np.hypot(sub_x - ex, sub_y - ey)
        cov = _coverage(d_eye, r_eye)[..., None]
        sub[:] = sub * (1 - cov) + np.array([246.0, 246.0, 246.0]) * cov
        px, py = ex + off_x * r_eye, ey + off_y * r_eye
        cov = (_coverage(np.hypot(sub_x - px, sub_y - py), r_pupil) * _coverage(d_eye, r_eye))[..., None]
        sub[:] = sub * (1 - cov) + np.array([28.0, 24.0, 34.0]) * cov

    out = np.floor(img + 0.5).clip(0, 255).astype(np.uint8)
    # the key-color ring is drawn last and exactly, so detection is pixel-tight
    ring = inside & (er >= 1.0 - rp.ring_px / a)
    out[y0:y1, x0:x1][ring] = HEAD_KEY_COLOR
    return Frame(out), box


def _tight_box(inside: np.ndarray, x0: int, y0: int) -> FaceBox:
    ys = np.flatnonzero(inside.any(axis=1))
    xs = np.flatnonzero(inside.any(axis=0))
    return FaceBox(float(x0 + xs[0]), float(y0 + ys[0]), float(xs[-1] - xs[0] + 1), float(ys[-1] - ys[0] + 1), 1.0)


def measure_pupil_offsets(frame: Frame, rp: RendererParams = RendererParams()) -> tuple[float, float]:
    """Pupil displacement in eye radii, measured from pixels alone.

    The head center is the centroid of the solid region bounded by the
    key-color ring and the head width its horizontal extent; eye centers follow from the head geometry. Each
    pupil center is the darkness-weighted centroid inside its eye disk, and
    the two eyes are averaged.
    """
    key = np.all(frame.pixels == np.asarray(HEAD_KEY_COLOR, dtype=np.uint8), axis=2)
    rows = np.flatnonzero(key.any(axis=1))
    # fill each row between its outermost ring pixels: the solid head ellipse
    spans = np.array([(np.flatnonzero(key[r])[[0, -1]]) for r in rows], dtype=np.float64)
    lengths = spans[:, 1] - spans[:, 0] + 1
    cx = float((lengths * (spans[:, 0] + spans[:, 1] + 1) / 2).sum() / lengths.sum())
    cy = float((lengths * (rows + 0.5)).sum() / lengths.sum())
    width = float(spans[:, 1].max() - spans[:, 0].min() + 1)
    r_eye = rp.eye_radius * width
    gray = frame.pixels.astype(np.float64).mean(axis=2)
    offs = []
    for side in (-1, 1):
        ex, ey = cx + side * rp.eye_dx * width, cy + rp.eye_dy * width
        xa, xb = int(ex - r_eye) - 1, int(ex + r_eye) + 2
        ya, yb = int(ey - r_eye) - 1, int(ey + r_eye) + 2
        g = gray[ya:yb, xa:xb]
        gy, gx = np.mgrid[ya:yb, xa:xb] + 0.5
        wgt = np.clip(246.0 - g, 0, None) * (np.hypot(gx - ex, gy - ey) < r_eye - 1)
        s = wgt.sum()
        offs.append(((wgt * gx).sum() / s - ex, (wgt * gy).sum() / s - ey))
    return float(np.mean([o[0] for o in offs]) / r_eye), float(np.mean([o[1] for o in offs]) / r_eye)


def sample_head(rng: np.random.Generator, subject: "SubjectProfile") -> HeadState:
    return HeadState(
        cx=float(subject.cx + rng.uniform(-subject.jitter, subject.jitter)),
        cy=float(subject.cy + rng.uniform(-subject.jitter, subject.jitter) * 0.6),
        width=float(subject.width * rng.uniform(0.93, 1.07)),
        skin=subject.skin,
    )


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: int
    cx: float
    cy: float
    width: float
    jitter: float
    skin: tuple[int, int, int]


def make_subject(seed: int, subject_id: int) -> SubjectProfile:
    rng = np.random.default_rng([seed, subject_id, 7])
    return SubjectProfile(
        subject_id=subject_id,
        cx=float(rng.uniform(270, 370)),
        cy=float(rng.uniform(215, 265)),
        width=float(rng.uniform(160, 190)),
        jitter=float(rng.uniform(15, 40)),
        skin=tuple(int(v) for v in rng.integers([170, 120, 90], [240, 200, 170])),
    )


# ---------------------------------------------------------------------------
# manifest

@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    path: str  # relative to the manifest directory
    bbox: FaceBox
    gaze_cm: GazePointCm
    location_index: int
    subject_id: int
    split: str

    def to_row(self) -> str:
        b = self.bbox
        return (
            f"{self.sample_id}, {self.path}, {b.x_b:g}, {b.y_b:g}, {b.w:g}, {b.h:g}, "
            f"{self.gaze_cm.x!r}, {self.gaze_cm.y!r}, {self.location_index}, {self.subject_id}, {self.split}"
        )

    @classmethod
    def from_row(cls, line: str) -> "SampleRecord":
        f = [s.strip() for s in line.split(",")]
        if len(f) != 11:
            raise ValueError(f"manifest row needs 11 fields: {line!r}")
        return cls(
            f[0], f[1], FaceBox(float(f[2]), float(f[3]), float(f[4]), float(f[5])),
            GazePointCm(float(f[6]), float(f[7])), int(f[8]), int(f[9]), f[10],
        )


MANIFEST_COLUMNS = "sample_id, path, x_b, y_b, w, h, gaze_x_cm, gaze_y_cm, location_index, subject_id, split"


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    root: Path
    meta: dict[str, str] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def frame_size(self) -> tuple[int, int]:
        return int(self.meta.get("frame_w", FRAME_W)), int(self.meta.get("frame_h", FRAME_H))

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def save(self, path: str | os.PathLike | None = None) -> Path:
        path = Path(path) if path else self.root / "manifest.csv"
        lines = [f"# {line}" for line in format_kv(self.meta).splitlines()]
        lines.append(f"# columns: {MANIFEST_COLUMNS}")
        lines += [r.to_row() for r in self.records]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.csv"
        meta_lines, records = [], []
        for raw in path.read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body and not body.startswith("columns:"):
                    meta_lines.append(body)
                continue
            records.append(SampleRecord.from_row(line))
        return cls(records, path.parent, parse_kv("\n".join(meta_lines)))

    def load_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Face crops (uint8, N x S x S x 3), bbox features (N x 4), gaze (N x 2) for a split."""
        if split not in self._cache:
            recs = self.split(split)
            fw, fh = self.frame_size
            normalize = self.meta.get("bbox_mode", "normalized") == "normalized"
            faces = np.stack([load_ppm(self.root / r.path).pixels for r in recs]) if recs else np.zeros((0, CROP_SIZE, CROP_SIZE, 3), np.uint8)
            boxes = np.array([bbox_features(r.bbox, fw, fh, normalize) for r in recs], dtype=np.float32).reshape(-1, 4)
            gaze = np.array([(r.gaze_cm.x, r.gaze_cm.y) for r in recs], dtype=np.float32).reshape(-1, 2)
            self._cache[split] = (faces, boxes, gaze)
        return self._cache[split]


def split_of(seed: int, sample_id: str, subject_id: int, by_subject: bool = False) -> str:
    key = f"{seed}:subject{subject_id}" if by_subject else f"{seed}:{sample_id}"
    u = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") / 2.0**64
    edge = 0.0
    for name, frac in zip(SPLITS, SPLIT_FRACTIONS):
        edge += frac
        if u < edge:
            return name
    return SPLITS[-1]


def generate(
    seed: int,
    n_subjects: int,
    frames_per_location: int,
    cal: CalibrationProfile,
    out_dir: str | os.PathLike,
    by_subject: bool = False,
    rp: RendererParams = RendererParams(),
) -> DatasetManifest:
    """Render every subject x location x frame, store face crops, write the manifest."""
    if n_subjects < 1 or frames_per_location < 1:
        raise ValueError("n_subjects and frames_per_location must be positive")
    out = Path(out_dir)
    (out / "faces").mkdir(parents=True, exist_ok=True)
    table = build_location_table(cal)
    records = []
    for s in range(n_subjects):
        subject = make_subject(seed, s)
        for loc, gaze in table.items():
            for k in range(frames_per_location):
                ss = np.random.SeedSequence([seed, s, loc, k])
                rng = np.random.default_rng(ss)
                head = sample_head(rng, subject)
                frame, box = render_sample(gaze, head, int(rng.integers(2**63)), rp)
                sid = f"s{s:02d}_l{loc:02d}_f{k:03d}"
                rel = f"faces/{sid}.ppm"
                save_ppm(crop_face(frame, box).image, out / rel)
                records.append(SampleRecord(sid, rel, box, gaze, loc, s, split_of(seed, sid, s, by_subject)))
    meta = {
        "seed": seed,
        "n_subjects": n_subjects,
        "frames_per_location": frames_per_location,
        "split_mode": "subject" if by_subject else "hash",
        "bbox_mode": "normalized",
        **rp.to_dict(),
    }
    manifest = DatasetManifest(records, out, {k: str(v) for k, v in meta.items()})
    manifest.save()
    return manifest


def batches(
    manifest: DatasetManifest, split: str, batch_size: int = 32, shuffle_seed: int | None = None
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(faces B x 3 x S x S in [0, 1], bbox B x 4, gaze B x 2) batches; the last may be short."""
    faces, boxes, gaze = manifest.load_arrays(split)
    n = len(faces)
    if n == 0:
        raise EmptySplit(f"split {split!r} is empty")
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield to_tensor(faces[idx]), boxes[idx], gaze[idx]


def to_tensor(images: np.ndarray) -> np.ndarray:
    """uint8 (B, H, W, 3) -> float32 (B, 3, H, W) scaled to [0, 1]."""
    return images.transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)


def require_nonempty(manifest: DatasetManifest) -> None:
    if not manifest.records:
        raise EmptyDataset("manifest has no records")
