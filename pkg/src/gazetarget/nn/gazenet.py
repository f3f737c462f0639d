"""AlexNet-style gaze regressor with the face bounding box fed into the first
fully-connected layer.

The conv stack keeps AlexNet's kernel sizes, strides and pooling; a width
multiplier scales every channel count and hidden width. The flattened conv
features are concatenated with the 4-value bbox vector before fc1, and fc3
emits an (x, y) gaze point in centimeters with no activation.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagic, ShapeMismatch, TruncatedParams, VersionMismatch
from . import layers as L

# name, out_channels at multiplier 1, kernel, stride, pad, max-pool after
CONV_SPECS = (
    ("conv1", 96, 11, 4, 0, True),
    ("conv2", 256, 5, 1, 2, True),
    ("conv3", 384, 3, 1, 1, False),
    ("conv4", 384, 3, 1, 1, False),
    ("conv5", 256, 3, 1, 1, True),
)
FC_WIDTH = 4096
POOL_K, POOL_S = 3, 2


@dataclass(frozen=True)
class GazeNetConfig:
    width_multiplier: float = 1.0
    input_size: int = 227
    bbox_feature_count: int = 4
    output_dim: int = 2

    def __post_init__(self):
        if not 0 < self.width_multiplier <= 1:
            raise ValueError("width_multiplier must be in (0, 1]")
        if self.output_dim != 2:
            raise ValueError("output_dim must be 2")

    def scaled(self, n: int) -> int:
        return max(1, round(n * self.width_multiplier))

    def conv_layers(self) -> list[tuple[str, int, int, int, int, int, bool]]:
        """(name, in_ch, out_ch, kernel, stride, pad, pool) per conv layer."""
        out, in_ch = [], 3
        for name, ch, k, s, p, pool in CONV_SPECS:
            c = self.scaled(ch)
            out.append((name, in_ch, c, k, s, p, pool))
            in_ch = c
        return out

    def conv_output_shape(self) -> tuple[int, int, int]:
        size = self.input_size
        ch = 3
        for _, _, ch, k, s, p, pool in self.conv_layers():
            size = L.conv_out_size(size, k, s, p)
            if pool:
                size = L.conv_out_size(size, POOL_K, POOL_S, 0)
            if size < 1:
                raise ShapeMismatch(f"input_size {self.input_size} too small for the conv stack")
        return size, size, ch

    @property
    def flat_features(self) -> int:
        h, w, c = self.conv_output_shape()
        return h * w * c

    def fc_layers(self) -> list[tuple[str, int, int]]:
        hidden = self.scaled(FC_WIDTH)
        return [
            ("fc1", self.flat_features + self.bbox_feature_count, hidden),
            ("fc2", hidden, hidden),
            ("fc3", hidden, self.output_dim),
        ]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for name, cin, cout, k, _, _, _ in self.conv_layers():
            shapes[f"{name}.weight"] = (cout, cin, k, k)
            shapes[f"{name}.bias"] = (cout,)
        for name, fin, fout in self.fc_layers():
            shapes[f"{name}.weight"] = (fin, fout)
            shapes[f"{name}.bias"] = (fout,)
        return shapes


def init_params(config: GazeNetConfig, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """Kaiming-uniform (fan-in) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def forward(params, config: GazeNetConfig, faces, bbox, keep_cache: bool = False):
    """Gaze points (B, 2) for faces (B, 3, S, S) in [0, 1] and bbox features (B, 4).

    Returns ``(out, cache)``; the cache is None unless ``keep_cache``.
    """
    s = config.input_size
    if faces.ndim != 4 or faces.shape[1:] != (3, s, s):
        raise ShapeMismatch(f"faces must be (B, 3, {s}, {s}), got {faces.shape}")
    if bbox.shape != (faces.shape[0], config.bbox_feature_count):
        raise ShapeMismatch(f"bbox must be ({faces.shape[0]}, {config.bbox_feature_count}), got {bbox.shape}")
    dtype = params["fc3.weight"].dtype
    x = np.ascontiguousarray(faces.transpose(0, 2, 3, 1), dtype=dtype)
    caches = []
    for li, (name, _, _, _, stride, pad, pool) in enumerate(config.conv_layers()):
        x, c_conv = L.conv2d_forward(x, params[f"{name}.weight"], params[f"{name}.bias"], stride, pad, need_input_grad=li > 0)
        x, c_relu = L.relu_forward(x)
        c_pool = None
        if pool:
            x, c_pool = L.maxpool_forward(x, POOL_K, POOL_S)
        if keep_cache:
            caches.append((c_conv, c_relu, c_pool))
    conv_shape = x.shape
    x = np.concatenate([x.reshape(x.shape[0], -1), bbox.astype(dtype, copy=False)], axis=1)
    fc_caches = []
    for name, _, _ in config.fc_layers():
        x, c_dense = L.dense_forward(x, params[f"{name}.weight"], params[f"{name}.bias"])
        c_relu = None
        if name != "fc3":
            x, c_relu = L.relu_forward(x)
        if keep_cache:
            fc_caches.append((c_dense, c_relu))
    cache = (caches, fc_caches, conv_shape) if keep_cache else None
    return x, cache


def backward(config: GazeNetConfig, cache, dout) -> dict[str, np.ndarray]:
    caches, fc_caches, conv_shape = cache
    grads = {}
    d = dout
    for (name, _, _), (c_dense, c_relu) in zip(reversed(config.fc_layers()), reversed(fc_caches)):
        if c_relu is not None:
            d = L.relu_backward(d, c_relu)
        d, grads[f"{name}.weight"], grads[f"{name}.bias"] = L.dense_backward(d, c_dense)
    d = d[:, : -config.bbox_feature_count].reshape(conv_shape)
    for (name, *_), (c_conv, c_relu, c_pool) in zip(reversed(config.conv_layers()), reversed(caches)):
        if c_pool is not None:
            d = L.maxpool_backward(d, c_pool)
        d = L.relu_backward(d, c_relu)
        d, grads[f"{name}.weight"], grads[f"{name}.bias"] = L.conv2d_backward(d, c_conv)
    return grads


class GazeNet:
    """Frozen parameters plus config; ``predict`` is safe to call from many threads."""

    def __init__(self, config: GazeNetConfig, params: dict[str, np.ndarray]):
        check_shapes(config, params)
        self.config = config
        self.params = params

    @classmethod
    def initialized(cls, config: GazeNetConfig, seed: int = 0, dtype=np.float32) -> "GazeNet":
        return cls(config, init_params(config, seed, dtype))

    def predict(self, faces, bbox) -> np.ndarray:
        out, _ = forward(self.params, self.config, faces, bbox)
        return out

    def save(self, path) -> None:
        save_params(self.params, self.config, path)

    @classmethod
    def load(cls, path, config: GazeNetConfig | None = None) -> "GazeNet":
        params, cfg = load_params(path, config)
        return cls(cfg, params)


def check_shapes(config: GazeNetConfig, params: dict[str, np.ndarray]) -> None:
    expected = config.param_shapes()
    if set(expected) != set(params):
        raise ShapeMismatch(f"parameter names differ: {sorted(set(expected) ^ set(params))}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")


# ---------------------------------------------------------------------------
# "GZNT" container: magic, u16 version, config record, then named tensors.
# All integers little-endian; tensors stored as little-endian float32.

MAGIC = b"GZNT"
FORMAT_VERSION = 1


def save_params(params: dict[str, np.ndarray], config: GazeNetConfig, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    buf.write(struct.pack("<dIII", config.width_multiplier, config.input_size, config.bbox_feature_count, config.output_dim))
    buf.write(struct.pack("<I", len(params)))
    for name in config.param_shapes():
        t = params[name]
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    data = buf.getvalue()
    if isinstance(path, (str, os.PathLike)):
        with open(path, "wb") as fh:
            fh.write(data)
    else:
        path.write(data)


def load_params(path, config: GazeNetConfig | None = None) -> tuple[dict[str, np.ndarray], GazeNetConfig]:
    """Read a container; if ``config`` is given the stored one must match it."""
    if isinstance(path, (str, os.PathLike)):
        with open(path, "rb") as fh:
            data = fh.read()
    else:
        data = path.read()
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedParams(f"parameter file ends at byte {len(view)}, needed {pos + n}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise BadMagic("not a GZNT parameter file")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    mult, size, nbox, nout = struct.unpack("<dIII", take(20))
    stored = GazeNetConfig(mult, size, nbox, nout)
    if config is not None and config != stored:
        raise ShapeMismatch(f"file holds {stored}, expected {config}")
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
    check_shapes(stored, params)
    return params, stored
