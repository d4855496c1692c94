"""Mini-batch training loop shared by the capsule model and the baselines.

Single-writer parameter updates, per-epoch metric rows (the training
curves), early stopping on validation accuracy with best-checkpoint
restore, and deterministic behavior under a fixed seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import TrainingError
from .nn.optim import make_optimizer

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    patience: int = 10
    seed: int = 0

    def to_dict(self):
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
            "optimizer": self.optimizer, "patience": self.patience, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw):
        return replace(cls(), **{k: raw[k] for k in raw if k in cls.__dataclass_fields__})


def channel_stats(windows):
    """Per-channel mean/std over a sample block (n, N_G, T, 2)."""
    x = np.asarray(windows, dtype=np.float64)
    return x.mean(axis=(0, 1, 2)), x.std(axis=(0, 1, 2))


def standardize_windows(x, nominal=(50.0, 0.0), eps=1e-9):
    """Per-window input normalization shared by every classifier.

    Removes the nominal operating point and scales each channel by the
    window's own rms deviation, so the representation depends on the
    shape of the excursion and not on its absolute magnitude (which an
    operator observing an attack of unknown onset/severity cannot know).
    """
    dev = x - np.asarray(nominal, dtype=x.dtype)
    scale = np.sqrt(np.mean(np.square(dev), axis=(1, 2), keepdims=True))
    return dev / np.maximum(scale, eps)


def evaluate(model, x, y):
    """(mean loss, accuracy) over a split, batched."""
    total_loss, correct = 0.0, 0
    n = len(y)
    for start in range(0, n, EVAL_BATCH):
        xb = x[start:start + EVAL_BATCH]
        yb = y[start:start + EVAL_BATCH]
        loss, c = model.eval_loss(xb, yb)
        total_loss += loss * len(yb)
        correct += c
    return total_loss / max(n, 1), correct / max(n, 1)


def predict_classes(model, x):
    out = []
    for start in range(0, len(x), EVAL_BATCH):
        out.append(np.argmax(model.scores(x[start:start + EVAL_BATCH]), axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def fit(model, train_xy, val_xy, cfg: TrainConfig):
    """Train in place; returns per-epoch history rows."""
    x_train, y_train = train_xy
    x_val, y_val = val_xy
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 12]))

    history = []
    best = {"val_acc": -1.0, "epoch": -1, "params": None}
    n = len(y_train)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss, epoch_correct = 0.0, 0
        for bidx, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            model.zero_grad()
            loss, correct = model.loss_and_backward(
                x_train[sel], y_train[sel], rng=dropout_rng
            )
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {bidx}")
            optimizer.step(model.params(), batch_index=bidx)
            epoch_loss += loss * len(sel)
            epoch_correct += correct
        val_loss, val_acc = evaluate(model, x_val, y_val)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / n,
            "train_acc": epoch_correct / n,
            "val_loss": val_loss,
            "val_acc": val_acc,
        })
        if val_acc > best["val_acc"]:
            best = {
                "val_acc": val_acc,
                "epoch": epoch,
                "params": [(name, p.values.copy()) for name, p in model.params()],
            }
        elif epoch - best["epoch"] >= cfg.patience:
            break

    if best["params"] is not None:
        for (_, p), (_, saved) in zip(model.params(), best["params"]):
            p.values[...] = saved
    return history


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
        )
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
