"""Forward/backward kernels for the layers the gaze regressor needs.

Activations are NHWC. Each ``*_forward`` returns ``(out, cache)`` and the
matching ``*_backward`` consumes that cache. Kernels are dtype-generic, so the
same code runs in float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # (N, H, W, C) -> (N, OH, OW, C, k, k) view
    return sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]


def conv2d_forward(x, w, b, stride=1, pad=0, need_input_grad=True):
    """Cross-correlation. ``x``: (N, H, W, C); ``w``: (F, C, k, k); ``b``: (F,)."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[1] != x.shape[3] or w.shape[2] != w.shape[3] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"conv2d: input {x.shape}, weights {w.shape}, bias {b.shape}")
    n, h, wd, c = x.shape
    f, _, k, _ = w.shape
    oh, ow = conv_out_size(h, k, stride, pad), conv_out_size(wd, k, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"conv2d: {h}x{wd} input too small for k={k}, s={stride}, p={pad}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    cols = _windows(xp, k, stride)[:, :oh, :ow].reshape(n * oh * ow, c * k * k)
    out = cols @ w.reshape(f, -1).T
    out += b
    cache = (cols, w, xp.shape, stride, pad, (n, oh, ow), need_input_grad)
    return out.reshape(n, oh, ow, f), cache


def conv2d_backward(dout, cache):
    cols, w, xp_shape, stride, pad, (n, oh, ow), need_input_grad = cache
    f, c, k, _ = w.shape
    d = dout.reshape(n * oh * ow, f)
    dw = (d.T @ cols).reshape(w.shape)
    db = d.sum(axis=0)
    if not need_input_grad:
        return None, dw, db
    dcols = (d @ w.reshape(f, -1)).reshape(n, oh, ow, c, k, k)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += dcols[..., i, j]
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad, :]
    return dxp, dw, db


def maxpool_forward(x, k=3, stride=2):
    n, h, wd, c = x.shape
    oh, ow = conv_out_size(h, k, stride, 0), conv_out_size(wd, k, stride, 0)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"maxpool: {h}x{wd} input too small for k={k}, s={stride}")
    win = _windows(x, k, stride)[:, :oh, :ow].reshape(n, oh, ow, c, k * k)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape, k, stride)


def maxpool_backward(dout, cache):
    idx, x_shape, k, stride = cache
    _, oh, ow, _ = dout.shape
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for pos in range(k * k):
        i, j = divmod(pos, k)
        dx[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += np.where(idx == pos, dout, 0)
    return dx


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    # subgradient 0 at 0
    return dout * mask


def dense_forward(x, w, b):
    """``x``: (N, in); ``w``: (in, out); ``b``: (out,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense: input {x.shape}, weights {w.shape}, bias {b.shape}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def mse_loss(pred, truth):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {truth.shape}")
    diff = pred - truth
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
