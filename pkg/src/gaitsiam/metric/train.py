"""Mini-batch SGD over the balanced pair reservoir."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from ..nn.model import DivergenceError
from ..pairing import balanced_batches
from .siamese import SiameseModel


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 20
    lr: float = 0.01
    seed: int = 0
    # stop once an epoch's mean pair loss drops below this
    target_loss: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


class FeatureSource:
    """Trunk inputs for bank images, past the frozen prefix when there is one.

    Frozen leading layers always map an image to the same activation, so
    those activations are computed once, on first use, and reused.
    """

    def __init__(self, model: SiameseModel, bank):
        self.pixels = np.stack(bank.pixels)[:, None]
        self.start = model.trunk.frozen_prefix
        self.trunk = model.trunk
        self._feat = None
        if self.start:
            shape = self.trunk.layers[self.start - 1].out_shape
            self._feat = np.empty((len(self.pixels),) + tuple(shape), dtype=self.trunk.dtype)
            self._ready = np.zeros(len(self.pixels), dtype=bool)

    def __getitem__(self, ids):
        if not self.start:
            return self.pixels[ids]
        todo = ids[~self._ready[ids]]
        if len(todo):
            self._feat[todo] = self.trunk.predict(self.pixels[todo], stop=self.start)
            self._ready[todo] = True
        return self._feat[ids]


def batch_arrays(batch, source):
    """Distinct inputs of a batch plus left/right indices into them."""
    ids = np.array([[r.left, r.right] for r in batch], dtype=np.intp)
    uniq, inv = np.unique(ids, return_inverse=True)
    inv = inv.reshape(ids.shape)
    y = np.array([r.y for r in batch], dtype=float)
    return source[uniq], inv[:, 0], inv[:, 1], y


def train_step(model: SiameseModel, images, left, right, y, lr, start=0):
    """One SGD step on the batch-mean loss; returns the summed batch loss."""
    loss, tg, hg, _ = model.loss_and_grads(images, left, right, y, start)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    n = len(y)
    tg = [{k: v / n for k, v in g.items()} for g in tg]
    if hg is not None:
        hg = {k: v / n for k, v in hg.items()}
    model.sgd_step(tg, hg, lr)
    return loss


def train(model: SiameseModel, buffer, bank, cfg: TrainConfig = TrainConfig(), log=None):
    """Train in place; returns ``(model, history)``.

    Each history row is ``{"epoch", "loss", "wall_ms"}`` where ``loss`` is
    the mean per-pair loss over the epoch's batches.  ``log`` may be a
    writable text stream receiving the rows as JSON lines.
    """
    if len(buffer) == 0:
        raise ValueError("pair buffer is empty")
    if cfg.batch_size > len(buffer):
        raise ValueError(f"batch size {cfg.batch_size} exceeds buffer size {len(buffer)}")
    source = FeatureSource(model, bank)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        total, count = 0.0, 0
        for batch in balanced_batches(buffer, cfg.batch_size, rng):
            images, left, right, y = batch_arrays(batch, source)
            total += train_step(model, images, left, right, y, cfg.lr, source.start)
            count += len(batch)
        row = {"epoch": epoch, "loss": total / count,
               "wall_ms": (time.perf_counter() - start) * 1000.0}
        history.append(row)
        if log is not None:
            log.write(json.dumps(row) + "\n")
            log.flush()
        if cfg.target_loss is not None and row["loss"] < cfg.target_loss:
            break
    return model, history


def epochs_to_reach(history, target):
    """First epoch whose loss is below ``target``, or None."""
    return next((row["epoch"] for row in history if row["loss"] < target), None)
