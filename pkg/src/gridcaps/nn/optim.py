"""Parameter update rules."""

import numpy as np

from ..errors import TrainingError


class SGD:
    """Plain gradient descent."""

    def __init__(self, lr=0.01):
        self.lr = lr

    def step(self, params, batch_index=None):
        for name, p in params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient in {name}"
                    + (f" at batch {batch_index}" if batch_index is not None else "")
                )
            p.values -= (self.lr * g).astype(p.values.dtype, copy=False)


class Adam:
    """Adam with bias correction (default lr 1e-3, betas 0.9/0.999)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = {}

    def step(self, params, batch_index=None):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient in {name}"
                    + (f" at batch {batch_index}" if batch_index is not None else "")
                )
            m, v = self.state.get(name, (None, None))
            if m is None:
                m = np.zeros_like(p.values, dtype=np.float64)
                v = np.zeros_like(p.values, dtype=np.float64)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * np.square(g)
            self.state[name] = (m, v)
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.values -= update.astype(p.values.dtype, copy=False)


def make_optimizer(kind, lr):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return SGD(lr=lr)
    raise TrainingError(f"unknown optimizer {kind!r}")
