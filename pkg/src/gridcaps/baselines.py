"""Benchmark classifiers trained on the same datasets as the capsule net.

Deep MLP, a per-bus 1-D CNN (time-axis convolutions), and a 2-D CNN
with max pooling, all under softmax cross-entropy. Layer plans are
sized so parameter counts stay within roughly 2x of the capsule model,
keeping the comparison about structure rather than capacity.
"""

from __future__ import annotations

import numpy as np

from .capsnet import _rng_for, plan_for_case
from .errors import StructuralError
from .nn.layers import (Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU,
                        Sequential, softmax)

BASELINE_KINDS = ("mlp", "cnn1d", "cnn2d")


def cross_entropy_grad(logits, labels):
    """Mean NLL of the softmax and its gradient wrt the logits."""
    labels = np.atleast_1d(labels)
    n = len(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(logz - shifted[np.arange(n), labels]))
    g = softmax(logits, axis=1)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


class BaselineModel:
    """Sequential network + cross-entropy, same trainer protocol as CapsNet."""

    def __init__(self, kind, case, net, class_count, seed):
        self.kind = kind
        self.case = case
        self.net = net
        self.class_count = class_count
        self.seed = seed
        self.input_shape = plan_for_case(case).input_shape
        self.dtype = np.float32

    def params(self):
        return self.net.params()

    def zero_grad(self):
        self.net.zero_grad()

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        self.net.astype(dtype)
        return self

    def _normalize(self, x):
        from .training import standardize_windows
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise StructuralError(
                f"window shape {x.shape[1:]} does not match case {self.case}"
            )
        return standardize_windows(x)

    def forward(self, x, training=False, rng=None):
        return self.net.forward(self._normalize(x), training=training, rng=rng)

    def loss_and_backward(self, x, labels, rng=None):
        logits, caches = self.forward(x, training=True, rng=rng)
        loss, glogits = cross_entropy_grad(logits, labels)
        self.net.backward(caches, glogits)
        correct = int(np.sum(np.argmax(logits, axis=1) == labels))
        return loss, correct

    def scores(self, x):
        logits, _ = self.forward(x, training=False)
        return logits

    def eval_loss(self, x, labels):
        logits, _ = self.forward(x, training=False)
        loss, _ = cross_entropy_grad(logits, labels)
        correct = int(np.sum(np.argmax(logits, axis=1) == labels))
        return loss, correct


def _flat_features(shape, layers):
    """Trace spatial dims through conv/pool layers to size the dense head."""
    h, w, c = shape
    for layer in layers:
        if isinstance(layer, Conv2D):
            h, w = layer.output_shape(h, w)
            c = layer.weights.shape[-1]
        elif isinstance(layer, MaxPool2D):
            h, w = h // layer.pool[0], w // layer.pool[1]
    return h * w * c


def build_baseline(kind, case, seed=0, dtype=np.float32) -> BaselineModel:
    """Instantiate one of the benchmark networks for a grid case."""
    plan = plan_for_case(case)
    shape, q = plan.input_shape, plan.digit_count
    rngs = iter(_rng_for(seed, 40 + i) for i in range(8))

    if kind == "mlp":
        flat = int(np.prod(shape))
        layers = [
            Flatten(),
            Dense(flat, 512, rng=next(rngs), dtype=dtype), ReLU(), Dropout(0.1),
            Dense(512, 256, rng=next(rngs), dtype=dtype), ReLU(), Dropout(0.1),
            Dense(256, q, rng=next(rngs), dtype=dtype),
        ]
        names = ["flatten", "fc1", "relu1", "drop1", "fc2", "relu2", "drop2", "out"]
    elif kind == "cnn1d":
        conv1 = Conv2D(shape[2], 64, (1, 10), (1, 2), rng=next(rngs), dtype=dtype)
        conv2 = Conv2D(64, 64, (1, 10), (1, 2), rng=next(rngs), dtype=dtype)
        flat = _flat_features(shape, [conv1, conv2])
        layers = [
            conv1, ReLU(), Dropout(0.1), conv2, ReLU(), Flatten(),
            Dense(flat, 128, rng=next(rngs), dtype=dtype), ReLU(), Dropout(0.1),
            Dense(128, q, rng=next(rngs), dtype=dtype),
        ]
        names = ["conv1", "relu1", "drop1", "conv2", "relu2", "flatten",
                 "fc1", "relu3", "drop2", "out"]
    elif kind == "cnn2d":
        conv1 = Conv2D(shape[2], 64, (2, 10), (1, 1), rng=next(rngs), dtype=dtype)
        pool1 = MaxPool2D((1, 2))
        conv2 = Conv2D(64, 128, (2, 5), (1, 1), rng=next(rngs), dtype=dtype)
        pool2 = MaxPool2D((1, 2))
        flat = _flat_features(shape, [conv1, pool1, conv2, pool2])
        layers = [
            conv1, ReLU(), pool1, conv2, ReLU(), pool2, Flatten(),
            Dense(flat, 256, rng=next(rngs), dtype=dtype), ReLU(), Dropout(0.1),
            Dense(256, q, rng=next(rngs), dtype=dtype),
        ]
        names = ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "flatten",
                 "fc1", "relu3", "drop1", "out"]
    else:
        raise StructuralError(f"unknown baseline kind {kind!r}")

    return BaselineModel(kind, case, Sequential(layers, names=names), q, seed)
