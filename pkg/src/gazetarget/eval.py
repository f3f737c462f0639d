"""Quantitative measures: regression error, layout hit rates, cue-response
statistics and the inference-speed benchmark."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import format_kv
from .dataset import DatasetManifest, build_location_table, to_tensor
from .errors import EmptyInput, EmptySplit, LengthMismatch
from .geometry import CalibrationProfile, GazePointCm, assign_target
from .layout import LayoutMap, LayoutSpec, LayoutStyle, generate_screenshot

# per-axis Gaussian sigma backed out of mean absolute errors 0.678 / 1.457 cm
# via the half-normal relation sigma = mean * sqrt(pi / 2)
DEFAULT_SIGMA = (0.678 * math.sqrt(math.pi / 2), 1.457 * math.sqrt(math.pi / 2))


# ---------------------------------------------------------------------------
# regression

@dataclass(frozen=True)
class RegressionReport:
    mean_euclidean_cm: float
    mean_abs_horizontal_cm: float
    mean_abs_vertical_cm: float
    n_samples: int

    def to_text(self) -> str:
        return format_kv(self.__dict__)


def _as_xy(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.array([(p.x, p.y) if isinstance(p, GazePointCm) else tuple(p) for p in points], dtype=np.float64).reshape(-1, 2)


def regression_report(predictions, truths) -> RegressionReport:
    p, t = _as_xy(predictions), _as_xy(truths)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} truths")
    if len(p) == 0:
        raise EmptyInput("no samples")
    d = p - t
    return RegressionReport(
        float(np.mean(np.hypot(d[:, 0], d[:, 1]))),
        float(np.mean(np.abs(d[:, 0]))),
        float(np.mean(np.abs(d[:, 1]))),
        len(p),
    )


def predict_split(model, manifest: DatasetManifest, split: str, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Model predictions and ground truth (both N x 2, cm) for a manifest split."""
    faces, boxes, gaze = manifest.load_arrays(split)
    if len(faces) == 0:
        raise EmptySplit(f"split {split!r} is empty")
    preds = [model.predict(to_tensor(faces[i : i + batch_size]), boxes[i : i + batch_size]) for i in range(0, len(faces), batch_size)]
    return np.concatenate(preds).astype(np.float64), gaze.astype(np.float64)


# ---------------------------------------------------------------------------
# hit rates

@dataclass(frozen=True)
class HitRateRow:
    style: str
    n: int
    hit_rate: float
    trials: int


@dataclass
class HitRateReport:
    rows: list[HitRateRow] = field(default_factory=list)

    def rate(self, style: str | LayoutStyle, n: int) -> float:
        style = LayoutStyle.parse(style).value
        for r in self.rows:
            if r.style == style and r.n == n:
                return r.hit_rate
        raise KeyError((style, n))

    def to_csv(self) -> str:
        """A row per style and a column per N ('--' when absent)."""
        ns = sorted({r.n for r in self.rows})
        lines = ["style, " + ", ".join(str(n) for n in ns)]
        for style in dict.fromkeys(r.style for r in self.rows):
            cells = []
            for n in ns:
                match = [r for r in self.rows if r.style == style and r.n == n]
                cells.append(f"{match[0].hit_rate:.6f}" if match else "--")
            lines.append(f"{style}, " + ", ".join(cells))
        return "\n".join(lines) + "\n"


def hit_rate_from_points(predictions, truths, layout: LayoutMap) -> float:
    """Fraction of samples whose predicted nearest cell equals the truth's nearest cell."""
    p, t = _as_xy(predictions), _as_xy(truths)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} truths")
    if len(p) == 0:
        raise EmptySplit("no samples")
    cents = layout.centroids()
    hits = 0
    for (px, py), (tx, ty) in zip(p, t):
        truth = assign_target(GazePointCm(tx, ty), cents, math.inf)
        pred = assign_target(GazePointCm(px, py), cents, math.inf)
        hits += truth.index == pred.index
    return hits / len(p)


def hit_rate_empirical(model, manifest: DatasetManifest, split: str, layout: LayoutMap, style: str = "", ) -> HitRateRow:
    preds, truths = predict_split(model, manifest, split)
    return HitRateRow(style, len(layout.cells), hit_rate_from_points(preds, truths, layout), len(preds))


def simulation_layout(style: str | LayoutStyle, n: int, cal: CalibrationProfile | None = None) -> LayoutMap:
    spec = LayoutSpec(n, LayoutStyle.parse(style), calibration=cal or CalibrationProfile())
    return generate_screenshot(spec)[1]


def _nearest(points: np.ndarray, cents: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # first minimum: lowest index on ties


TRUTH_MODELS = ("cells", "centroids", "locations")


def hit_rate_simulated(
    style: str | LayoutStyle,
    n: int,
    sigma: tuple[float, float] = DEFAULT_SIGMA,
    trials: int = 1_000_000,
    seed: int = 0,
    truth: str = "cells",
    cal: CalibrationProfile | None = None,
    shard: int = 100_000,
) -> float:
    """Monte Carlo hit rate under axis-wise Gaussian prediction error.

    ``truth`` picks where true gaze points fall: uniformly inside a uniformly
    chosen cell (``cells``), exactly on cell centroids (``centroids``), or on
    the 91-point gaze location grid (``locations``). Shards draw from
    independent child seeds and are summed in order, so results depend only
    on ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if truth not in TRUTH_MODELS:
        raise ValueError(f"truth must be one of {TRUTH_MODELS}")
    cal = cal or CalibrationProfile()
    layout = simulation_layout(style, n, cal)
    cents = np.array(layout.centroids())
    boxes = np.array([c.bbox_px for c in layout.cells], dtype=np.float64)
    locs = np.array([(g.x, g.y) for g in build_location_table(cal).values()])
    sx, sy = cal.cm_per_px
    hits = 0
    children = np.random.SeedSequence(seed).spawn(math.ceil(trials / shard))
    for k, child in enumerate(children):
        m = min(shard, trials - k * shard)
        rng = np.random.default_rng(child)
        if truth == "centroids":
            t = cents[rng.integers(len(cents), size=m)]
        elif truth == "locations":
            t = locs[rng.integers(len(locs), size=m)]
        else:
            c = rng.integers(len(cents), size=m)
            # continuous area of pixel p spans [p - 0.5, p + 0.5] in centroid coordinates
            px = boxes[c, 0] - 0.5 + rng.random(m) * boxes[c, 2]
            py = boxes[c, 1] - 0.5 + rng.random(m) * boxes[c, 3]
            t = np.stack([(px - cal.camera_px_x) * sx, (py - cal.camera_px_y) * sy], axis=1)
        p = t + rng.normal(size=(m, 2)) * np.asarray(sigma)
        hits += int(np.count_nonzero(_nearest(t, cents) == _nearest(p, cents)))
    return hits / trials


def hit_rate_table(
    sigma: tuple[float, float] = DEFAULT_SIGMA,
    trials: int = 1_000_000,
    seed: int = 0,
    ns: Sequence[int] = range(2, 9),
    truth: str = "cells",
    cal: CalibrationProfile | None = None,
) -> HitRateReport:
    report = HitRateReport()
    for style in (LayoutStyle.GRID, LayoutStyle.STRIP):
        for n in ns:
            if style is LayoutStyle.STRIP and n < 3:
                continue
            rate = hit_rate_simulated(style, n, sigma, trials, seed, truth, cal)
            report.rows.append(HitRateRow(style.value, n, rate, trials))
    return report


# ---------------------------------------------------------------------------
# cue-response statistics

class _Undefined:
    """Ratio with a zero denominator; distinct from 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "undefined"

    __str__ = __repr__

    def __bool__(self) -> bool:
        return False


UNDEFINED = _Undefined()


def _ratio(num: int, den: int):
    return num / den if den else UNDEFINED


@dataclass(frozen=True)
class CueStats:
    hits: int
    misses: int
    false_plays: int
    correct_rejects: int

    @property
    def n(self) -> int:
        return self.hits + self.misses + self.false_plays + self.correct_rejects

    @property
    def hit_rate(self):
        return _ratio(self.hits, self.hits + self.misses)

    @property
    def miss_rate(self):
        return _ratio(self.misses, self.hits + self.misses)

    @property
    def precision(self):
        return _ratio(self.hits, self.hits + self.false_plays)

    @property
    def accuracy(self):
        return _ratio(self.hits + self.correct_rejects, self.n)

    def to_text(self) -> str:
        return format_kv(
            {
                "hits": self.hits,
                "misses": self.misses,
                "false_plays": self.false_plays,
                "correct_rejects": self.correct_rejects,
                "n": self.n,
                "hit_rate": self.hit_rate,
                "miss_rate": self.miss_rate,
                "precision": self.precision,
                "accuracy": self.accuracy,
            }
        )


def cue_stats(hits: int, misses: int, false_plays: int, correct_rejects: int) -> CueStats:
    counts = (hits, misses, false_plays, correct_rejects)
    if any(c < 0 for c in counts):
        raise ValueError("counts must be non-negative")
    return CueStats(*counts)


# ---------------------------------------------------------------------------
# throughput

@dataclass(frozen=True)
class BenchResult:
    trials: int
    mean_s: float
    fps: float
    p50_s: float
    p95_s: float

    def to_text(self) -> str:
        return format_kv(self.__dict__)


def fps_from_latency(mean_s: float) -> float:
    return 1.0 / mean_s


def fps_benchmark(pipeline: Callable[[], object], trials: int = 1000, warmup: int = 10) -> BenchResult:
    """Time ``pipeline()`` with a monotonic clock after untimed warm-up calls."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for _ in range(warmup):
        pipeline()
    samples = []
    clock = time.perf_counter
    for _ in range(trials):
        t0 = clock()
        pipeline()
        samples.append(clock() - t0)
    mean = statistics.fmean(samples)
    ordered = sorted(samples)
    p95 = ordered[min(len(ordered) - 1, math.ceil(0.95 * len(ordered)) - 1)]
    return BenchResult(trials, mean, fps_from_latency(mean), statistics.median(samples), p95)
