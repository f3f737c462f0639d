"""Live pipeline: per-frame gaze inference, target assignment, temporal
smoothing, name overlay, and the outputs that feed a virtual camera (a frame
sequence on disk and a latest-frame slot read by the stream server)."""

from __future__ import annotations

import errno
import logging
import math
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .dataset import to_tensor
from .errors import DiskFull, NonWritable, SequenceExists
from .facedet import Detector, SyntheticDetector, crop_face, select_primary
from .font import CHARSET
from .geometry import TARGETLESS, AssignmentResult, CalibrationProfile, GazePointCm, assign_target
from .imaging import RGB, Frame, draw_text, encode_ppm, load_ppm, save_ppm, text_extent
from .layout import LayoutMap, LayoutSpec, generate_screenshot, load_layout, parse_screenshot
from .nn.gazenet import GazeNet

log = logging.getLogger(__name__)

TARGETLESS_LABEL = "—"
# the embedded font has no em dash glyph; the overlay draws this instead
OVERLAY_FALLBACK = {TARGETLESS_LABEL: "-"}
PPM_CONTENT_TYPE = "image/x-portable-pixmap"


@dataclass(frozen=True)
class OverlayStyle:
    origin: tuple[int, int] | None = None  # None: top-center
    scale: int = 3
    color: RGB = (255, 255, 255)
    margin: int = 8

    def origin_for(self, frame: Frame, text: str) -> tuple[int, int]:
        if self.origin is not None:
            return self.origin
        tw, _ = text_extent(text, self.scale)
        return max(0, (frame.width - tw) // 2), self.margin


@dataclass(frozen=True)
class PipelineConfig:
    """Exactly one of ``layout_file``, ``layout_screenshot`` or ``layout_spec`` selects the layout."""

    calibration: CalibrationProfile = field(default_factory=CalibrationProfile)
    layout_file: str | None = None
    layout_screenshot: str | None = None
    layout_spec: LayoutSpec | None = None
    model_path: str | None = None
    tau_cm: float | None = None  # None: the layout's (auto) tau
    window: int = 5
    overlay: OverlayStyle = field(default_factory=OverlayStyle)
    normalize_bbox: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("smoothing window must be >= 1")
        sources = [s for s in (self.layout_file, self.layout_screenshot, self.layout_spec) if s is not None]
        if len(sources) != 1:
            raise ValueError("exactly one layout source is required")
        if self.tau_cm is not None and self.tau_cm < 0:
            raise ValueError("tau must be non-negative")

    def load_layout(self) -> LayoutMap:
        if self.layout_file is not None:
            lmap = load_layout(self.layout_file, self.calibration)
        elif self.layout_screenshot is not None:
            lmap = parse_screenshot(load_ppm(self.layout_screenshot), self.calibration)
        else:
            lmap = generate_screenshot(self.layout_spec)[1]
        return lmap if self.tau_cm is None else lmap.with_tau(self.tau_cm)


@dataclass(frozen=True)
class FrameResult:
    frame_id: str
    face_found: bool
    gaze_cm: GazePointCm | None
    assignment: AssignmentResult  # raw, before smoothing
    displayed_index: int | None  # 0-based cell index after smoothing
    displayed_label: str
    annotated: Frame


class Smoother:
    """Mode over the last ``window`` raw targets; ties go to the most recent."""

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.history: deque[int | None] = deque(maxlen=window)

    def push(self, index: int | None) -> int | None:
        self.history.append(index)
        counts: dict[int | None, int] = {}
        for v in self.history:
            counts[v] = counts.get(v, 0) + 1
        best = max(counts.values())
        for v in reversed(self.history):
            if counts[v] == best:
                return v
        raise AssertionError("unreachable")


def overlay_text(label: str) -> str:
    text = OVERLAY_FALLBACK.get(label, label)
    return "".join(ch if ch in CHARSET else " " for ch in text)


class Pipeline:
    """detect -> primary face -> crop -> regress -> assign -> smooth -> overlay.

    Holds the per-stream smoothing state, so use one instance per video stream.
    """

    def __init__(
        self,
        config: PipelineConfig,
        model: GazeNet | None = None,
        detector: Detector | None = None,
        layout: LayoutMap | None = None,
    ):
        self.config = config
        if model is None:
            if config.model_path is None:
                raise ValueError("a model or model_path is required")
            model = GazeNet.load(config.model_path)
        self.model = model
        self.detector = detector or SyntheticDetector()
        self.layout = layout if layout is not None else config.load_layout()
        if config.tau_cm is not None:
            self.layout = self.layout.with_tau(config.tau_cm)
        self._centroids = self.layout.centroids()
        self.smoother = Smoother(config.window)
        self._count = 0

    def estimate(self, frame: Frame, frame_id: str | None = None) -> GazePointCm | None:
        box = select_primary(self.detector(frame, frame_id))
        if box is None:
            return None
        crop = crop_face(frame, box, self.model.config.input_size, self.config.normalize_bbox)
        faces = to_tensor(crop.image.pixels[None])
        bbox = np.asarray([crop.bbox_features], dtype=np.float32)
        x, y = self.model.predict(faces, bbox)[0]
        return GazePointCm(float(x), float(y))

    def process_frame(self, frame: Frame, frame_id: str | None = None) -> FrameResult:
        self._count += 1
        fid = frame_id if frame_id is not None else f"{self._count:06d}"
        try:
            gaze = self.estimate(frame, fid)
        except Exception:  # a bad frame must not stop the stream
            log.exception("frame %s: inference failed", fid)
            gaze = None
        raw = TARGETLESS if gaze is None else assign_target(gaze, self._centroids, self.layout.tau_cm)
        shown = self.smoother.push(raw.index)
        label = TARGETLESS_LABEL if shown is None else self.layout.cells[shown].name
        text = overlay_text(label)
        style = self.config.overlay
        annotated = draw_text(frame, text, style.origin_for(frame, text), style.scale, style.color)
        return FrameResult(fid, gaze is not None, gaze, raw, shown, label, annotated)


# ---------------------------------------------------------------------------
# disk output

FRAME_NAME = re.compile(r"^frame_(\d{6})\.ppm$")


def frame_name(n: int) -> str:
    return f"frame_{n:06d}.ppm"


class SequenceWriter:
    """Writes ``frame_000001.ppm``, ``frame_000002.ppm``, ... with no gaps.

    With ``append`` numbering continues after the highest existing frame;
    otherwise the directory must not already hold a sequence.
    """

    def __init__(self, directory: str | os.PathLike, append: bool = False):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise NonWritable(f"cannot create {self.dir}: {exc}") from exc
        if not os.access(self.dir, os.W_OK):
            raise NonWritable(f"{self.dir} is not writable")
        existing = sorted(int(m.group(1)) for p in self.dir.iterdir() if (m := FRAME_NAME.match(p.name)))
        if existing and not append:
            raise SequenceExists(f"{self.dir} already holds {len(existing)} frames; use append")
        self.next_index = (existing[-1] if existing else 0) + 1

    def write(self, frame: Frame) -> Path:
        path = self.dir / frame_name(self.next_index)
        try:
            save_ppm(frame, path)
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise DiskFull(str(exc)) from exc
            raise NonWritable(str(exc)) from exc
        self.next_index += 1
        return path


def write_sequence(results: Iterable[FrameResult], directory: str | os.PathLike, append: bool = False) -> list[Path]:
    writer = SequenceWriter(directory, append)
    return [writer.write(r.annotated) for r in results]


# ---------------------------------------------------------------------------
# latest-frame slot shared by the producer and stream clients

class LatestFrameSlot:
    """Single-slot mailbox: ``put`` replaces the payload atomically and never blocks on readers."""

    def __init__(self, encoder: Callable[[Frame], bytes] = encode_ppm, content_type: str = PPM_CONTENT_TYPE):
        self.encoder = encoder
        self.content_type = content_type
        self._cond = threading.Condition()
        self._version = 0
        self._payload: bytes | None = None
        self._closed = False

    def put(self, frame: Frame) -> int:
        payload = self.encoder(frame)
        with self._cond:
            self._version += 1
            self._payload = payload
            self._cond.notify_all()
            return self._version

    def latest(self) -> tuple[int, bytes] | None:
        with self._cond:
            return None if self._payload is None else (self._version, self._payload)

    def wait_newer(self, version: int, timeout: float | None = None) -> tuple[int, bytes] | None:
        """Newest payload with a version above ``version``; None on timeout or close."""
        with self._cond:
            self._cond.wait_for(lambda: self._closed or self._version > version, timeout)
            if self._version > version and self._payload is not None:
                return self._version, self._payload
            return None

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed

    @property
    def version(self) -> int:
        return self._version


def list_frames(directory: str | os.PathLike) -> list[Path]:
    """Input frames (``*.ppm``) in name order."""
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".ppm")


def run_directory(
    pipeline: Pipeline,
    frames: Iterable[Path],
    writer: SequenceWriter | None = None,
    slot: LatestFrameSlot | None = None,
    pace_s: float = 0.0,
    on_result: Callable[[FrameResult], None] | None = None,
) -> list[FrameResult]:
    """Drive the pipeline over frame files, feeding the disk writer and/or stream slot.

    ``pace_s`` holds each frame to at least that period, like a live camera.
    """
    results = []
    next_due = time.perf_counter()
    for path in frames:
        result = pipeline.process_frame(load_ppm(path), path.stem)
        if writer is not None:
            writer.write(result.annotated)
        if slot is not None:
            slot.put(result.annotated)
        if on_result is not None:
            on_result(result)
        results.append(result)
        if pace_s > 0:
            next_due += pace_s
            delay = next_due - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
    return results


def result_row(r: FrameResult) -> str:
    gx = "" if r.gaze_cm is None else repr(round(r.gaze_cm.x, 4))
    gy = "" if r.gaze_cm is None else repr(round(r.gaze_cm.y, 4))
    raw = "" if r.assignment.index is None else str(r.assignment.index + 1)
    dist = "" if math.isinf(r.assignment.distance_cm) else repr(round(r.assignment.distance_cm, 4))
    return f"{r.frame_id}, {int(r.face_found)}, {gx}, {gy}, {raw}, {dist}, {r.displayed_label}"


RESULT_COLUMNS = "frame_id, face_found, gaze_x_cm, gaze_y_cm, raw_target, raw_distance_cm, label"
