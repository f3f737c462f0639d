"""Finite-difference verification of the regressor's analytic gradients."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .gazenet import GazeNetConfig, backward, forward, init_params

# smallest input the AlexNet conv/pool geometry accepts (final map is 1x1)
SMALL_CONFIG = GazeNetConfig(width_multiplier=1 / 96, input_size=67)
TOLERANCE = 1e-5
STEP = 1e-4


@dataclass(frozen=True)
class GradCheckReport:
    per_tensor: dict[str, float]
    tolerance: float

    @property
    def per_layer(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, err in self.per_tensor.items():
            layer = name.split(".")[0]
            out[layer] = max(out.get(layer, 0.0), err)
        return out

    @property
    def max_rel_error(self) -> float:
        return max(self.per_tensor.values())

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_text(self) -> str:
        lines = [f"{layer} = {err:.3e}" for layer, err in self.per_layer.items()]
        lines.append(f"max_rel_error = {self.max_rel_error:.3e}")
        lines.append(f"tolerance = {self.tolerance:.1e}")
        lines.append(f"status = {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max abs difference scaled by the larger of the two max magnitudes."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every element of ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


@contextlib.contextmanager
def _corrupted_dense_backward():
    original = L.dense_backward

    def broken(dout, cache):
        dx, dw, db = original(dout, cache)
        return dx, dw * 1.01, db

    L.dense_backward = broken
    try:
        yield
    finally:
        L.dense_backward = original


def grad_check(
    config: GazeNetConfig = SMALL_CONFIG,
    seed: int = 0,
    batch: int = 2,
    step: float = STEP,
    tolerance: float = TOLERANCE,
    corrupt_dense: bool = False,
) -> GradCheckReport:
    """Compare backprop against central differences for every parameter, in float64."""
    rng = np.random.default_rng([seed, 99])
    params = init_params(config, seed, dtype=np.float64)
    # small positive biases keep ReLUs of the tiny network alive
    for name in params:
        if name.endswith(".bias"):
            params[name] = rng.uniform(0.01, 0.1, size=params[name].shape)
    s = config.input_size
    faces = rng.uniform(0, 1, size=(batch, 3, s, s))
    bbox = rng.uniform(0, 1, size=(batch, config.bbox_feature_count))
    truth = rng.normal(0, 5, size=(batch, config.output_dim))

    def loss() -> float:
        out, _ = forward(params, config, faces, bbox)
        return L.mse_loss(out, truth)[0]

    ctx = _corrupted_dense_backward() if corrupt_dense else contextlib.nullcontext()
    with ctx:
        out, cache = forward(params, config, faces, bbox, keep_cache=True)
        _, dout = L.mse_loss(out, truth)
        grads = backward(config, cache, dout)
    errors = {name: relative_error(grads[name], numeric_grad(loss, params[name], step)) for name in config.param_shapes()}
    return GradCheckReport(errors, tolerance)
