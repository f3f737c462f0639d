"""Pixel/centimeter calibration and nearest-target assignment."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import parse_kv, format_kv
from .errors import ConfigError, EmptyLayout


@dataclass(frozen=True)
class CalibrationProfile:
    """Affine map between a screen raster and centimeters on the screen plane.

    The camera projects onto pixel ``(camera_px_x, camera_px_y)``; x grows
    rightward and y downward from it.
    """

    screen_w_px: int = 1920
    screen_h_px: int = 1080
    screen_w_cm: float = 69.84
    screen_h_cm: float = 39.28
    camera_px_x: float = 960.0
    camera_px_y: float = 0.0

    def __post_init__(self):
        dims = (self.screen_w_px, self.screen_h_px, self.screen_w_cm, self.screen_h_cm)
        if not all(math.isfinite(d) and d > 0 for d in dims):
            raise ConfigError(f"calibration dimensions must be positive and finite: {dims}")

    @property
    def cm_per_px(self) -> tuple[float, float]:
        return self.screen_w_cm / self.screen_w_px, self.screen_h_cm / self.screen_h_px

    @property
    def camera_cm(self) -> tuple[float, float]:
        """Camera position measured from the screen's top-left corner, in cm."""
        sx, sy = self.cm_per_px
        return self.camera_px_x * sx, self.camera_px_y * sy

    def to_text(self) -> str:
        return format_kv(
            {
                "screen_w_px": self.screen_w_px,
                "screen_h_px": self.screen_h_px,
                "screen_w_cm": self.screen_w_cm,
                "screen_h_cm": self.screen_h_cm,
                "camera_px_x": self.camera_px_x,
                "camera_px_y": self.camera_px_y,
            }
        )

    @classmethod
    def from_text(cls, text: str) -> "CalibrationProfile":
        kv = parse_kv(text)
        known = {"screen_w_px", "screen_h_px", "screen_w_cm", "screen_h_cm", "camera_px_x", "camera_px_y"}
        unknown = set(kv) - known
        if unknown:
            raise ConfigError(f"unknown calibration keys: {sorted(unknown)}")
        try:
            return cls(
                screen_w_px=int(kv.get("screen_w_px", 1920)),
                screen_h_px=int(kv.get("screen_h_px", 1080)),
                screen_w_cm=float(kv.get("screen_w_cm", 69.84)),
                screen_h_cm=float(kv.get("screen_h_cm", 39.28)),
                camera_px_x=float(kv.get("camera_px_x", int(kv.get("screen_w_px", 1920)) / 2)),
                camera_px_y=float(kv.get("camera_px_y", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CalibrationProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


@dataclass(frozen=True)
class GazePointCm:
    x: float
    y: float


@dataclass(frozen=True)
class AssignmentResult:
    """Outcome of target assignment: ``index`` is the 0-based winning
    centroid, or None for the targetless outcome."""

    index: int | None
    distance_cm: float

    @property
    def is_target(self) -> bool:
        return self.index is not None


TARGETLESS = AssignmentResult(None, math.inf)


def px_to_cm(p: tuple[float, float], cal: CalibrationProfile) -> GazePointCm:
    sx, sy = cal.cm_per_px
    return GazePointCm((p[0] - cal.camera_px_x) * sx, (p[1] - cal.camera_px_y) * sy)


def cm_to_px(g: GazePointCm, cal: CalibrationProfile) -> tuple[float, float]:
    sx, sy = cal.cm_per_px
    return g.x / sx + cal.camera_px_x, g.y / sy + cal.camera_px_y


def nearest(g: GazePointCm, centroids: Sequence[tuple[float, float]]) -> tuple[int | None, float]:
    """Index of the centroid with the smallest squared distance (lowest index on ties)."""
    best, best_d2 = None, math.inf
    for n, (cx, cy) in enumerate(centroids):
        d2 = (g.x - cx) ** 2 + (g.y - cy) ** 2
        if d2 < best_d2:
            best, best_d2 = n, d2
    return best, best_d2


def assign_target(g: GazePointCm, centroids: Sequence[tuple[float, float]], tau: float) -> AssignmentResult:
    """Nearest centroid if it lies within ``tau`` cm, otherwise targetless.

    An empty centroid list is targetless with infinite distance. ``tau`` may be
    ``math.inf`` for pure nearest-cell assignment.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    n, d2 = nearest(g, centroids)
    if n is None:
        return TARGETLESS
    dist = math.sqrt(d2)
    if d2 <= tau * tau:
        return AssignmentResult(n, dist)
    return AssignmentResult(None, dist)


def auto_tau(cells: Iterable[tuple[int, int, int, int]], cal: CalibrationProfile) -> float:
    """1.25 times the half-diagonal, in cm, of the largest cell bbox."""
    cells = list(cells)
    if not cells:
        raise EmptyLayout("auto_tau needs at least one cell")
    sx, sy = cal.cm_per_px
    half_diag = max(math.hypot(w * sx / 2, h * sy / 2) for _, _, w, h in cells)
    return 1.25 * half_diag
