"""Mini-batch training of the gaze regressor."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from ..dataset import DatasetManifest, batches, require_nonempty
from . import layers as L
from .gazenet import GazeNet, GazeNetConfig, backward, forward, init_params
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def evaluate_loss(net: GazeNet, manifest: DatasetManifest, split: str, batch_size: int = 64) -> float:
    total, count = 0.0, 0
    for faces, bbox, gaze in batches(manifest, split, batch_size):
        loss, _ = L.mse_loss(net.predict(faces, bbox), gaze)
        total += loss * len(gaze)
        count += len(gaze)
    return total / count


def train(
    manifest: DatasetManifest,
    config: GazeNetConfig,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
    lr: float = 1e-3,
    val_split: str = "val",
) -> tuple[GazeNet, list[EpochLog]]:
    """Train from a fresh seeded init. Epoch 0 in the log is the untrained network."""
    require_nonempty(manifest)
    params = init_params(config, seed)
    net = GazeNet(config, params)
    state = AdamState.zeros_like(params)
    has_val = bool(manifest.split(val_split))
    shuffle = np.random.default_rng([seed, 1])

    def val_loss() -> float:
        return evaluate_loss(net, manifest, val_split) if has_val else float("nan")

    history = [EpochLog(0, evaluate_loss(net, manifest, "train"), val_loss())]
    log.info("epoch 0: train %.4f val %.4f", history[0].train_loss, history[0].val_loss)
    for epoch in range(1, epochs + 1):
        total, count = 0.0, 0
        for faces, bbox, gaze in batches(manifest, "train", batch_size, int(shuffle.integers(2**63))):
            pred, cache = forward(params, config, faces, bbox, keep_cache=True)
            loss, dpred = L.mse_loss(pred, gaze)
            adam_step(params, backward(config, cache, dpred), state, lr)
            total += loss * len(gaze)
            count += len(gaze)
        history.append(EpochLog(epoch, total / count, val_loss()))
        log.info("epoch %d: train %.4f val %.4f", epoch, history[-1].train_loss, history[-1].val_loss)
    return net, history


def format_loss_log(history: list[EpochLog]) -> str:
    return "".join(f"{h.epoch}, {h.train_loss!r}, {h.val_loss!r}\n" for h in history)


def write_loss_log(history: list[EpochLog], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_loss_log(history))
