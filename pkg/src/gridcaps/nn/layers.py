"""Differentiable layers with explicit forward/backward pairs.

Forward returns ``(y, cache)``; backward consumes the cache, accumulates
parameter gradients in place, and returns the input gradient. Caches
are caller-owned so inference over a frozen model stays thread safe.
"""

from __future__ import annotations

import numpy as np

from ..errors import StructuralError
from . import backend
from .tensor import Tensor


def he_std(fan_in):
    return np.sqrt(2.0 / fan_in)


class Layer:
    """Parameter container; concrete layers define forward/backward."""

    def params(self):
        return []

    def zero_grad(self):
        for _, p in self.params():
            p.zero_grad()

    def astype(self, dtype):
        for _, p in self.params():
            p.values = p.values.astype(dtype)
            p.grad = None
        return self


class Conv2D(Layer):
    """Valid (no padding) 2-D cross-correlation over NHWC input."""

    def __init__(self, in_channels, out_channels, kernel, stride, rng=None, dtype=np.float32):
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        kh, kw = self.kernel
        fan_in = kh * kw * in_channels
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, he_std(fan_in), size=(kh, kw, in_channels, out_channels))
        self.weights = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))

    def params(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def output_shape(self, h, w):
        kh, kw = self.kernel
        sh, sw = self.stride
        ho = (h - kh) // sh + 1
        wo = (w - kw) // sw + 1
        if ho <= 0 or wo <= 0:
            raise StructuralError(
                f"convolution of {h}x{w} input with kernel {self.kernel} "
                f"stride {self.stride} has non-positive output size"
            )
        return ho, wo

    def forward(self, x, training=False):
        self.output_shape(x.shape[1], x.shape[2])
        kern = backend.active()
        y = kern.conv2d_forward(x, self.weights.values, self.bias.values, *self.stride)
        return y, x

    def backward(self, cache, gy):
        x = cache
        kern = backend.active()
        gy = np.ascontiguousarray(gy)
        kh, kw = self.kernel
        gw, gb = kern.conv2d_backward_params(x, gy, kh, kw, *self.stride)
        self.weights.add_grad(gw)
        self.bias.add_grad(gb)
        return kern.conv2d_backward_input(gy, self.weights.values, x.shape, *self.stride)


class Dense(Layer):
    """Affine map on the last axis."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, he_std(in_features), size=(in_features, out_features))
        self.weights = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))

    def params(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def forward(self, x, training=False):
        return x @ self.weights.values + self.bias.values, x

    def backward(self, cache, gy):
        x = cache
        self.weights.add_grad(x.T @ gy)
        self.bias.add_grad(gy.sum(axis=0))
        return gy @ self.weights.values.T


class ReLU(Layer):
    def forward(self, x, training=False):
        y = np.maximum(x, 0)
        return y, x > 0

    def backward(self, cache, gy):
        return gy * cache


class Dropout(Layer):
    """Inverted dropout: training scales kept units by 1/(1-rate)."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise StructuralError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise StructuralError("training-mode dropout needs an rng")
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * mask, mask

    def backward(self, cache, gy):
        return gy if cache is None else gy * cache


class MaxPool2D(Layer):
    """Non-overlapping max pooling (used by the baseline CNNs only)."""

    def __init__(self, pool):
        self.pool = tuple(pool)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        ph, pw = self.pool
        ho, wo = h // ph, w // pw
        trimmed = x[:, :ho * ph, :wo * pw, :]
        view = trimmed.reshape(n, ho, ph, wo, pw, c).transpose(0, 1, 3, 2, 4, 5)
        tiles = view.reshape(n, ho, wo, ph * pw, c)
        arg = tiles.argmax(axis=3)
        y = np.take_along_axis(tiles, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return y, (x.shape, arg)

    def backward(self, cache, gy):
        x_shape, arg = cache
        n, h, w, c = x_shape
        ph, pw = self.pool
        ho, wo = h // ph, w // pw
        gtiles = np.zeros((n, ho, wo, ph * pw, c), dtype=gy.dtype)
        np.put_along_axis(gtiles, arg[:, :, :, None, :], gy[:, :, :, None, :], axis=3)
        gx = np.zeros(x_shape, dtype=gy.dtype)
        block = gtiles.reshape(n, ho, wo, ph, pw, c).transpose(0, 1, 3, 2, 4, 5)
        gx[:, :ho * ph, :wo * pw, :] = block.reshape(n, ho * ph, wo * pw, c)
        return gx


class Flatten(Layer):
    def forward(self, x, training=False):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, gy):
        return gy.reshape(cache)


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis``."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(gy, y, axis=-1):
    """Jacobian-vector product given the softmax output ``y``."""
    inner = np.sum(gy * y, axis=axis, keepdims=True)
    return y * (gy - inner)


class Sequential(Layer):
    """Plain layer chain used by the baselines and the conv front ends."""

    def __init__(self, layers, names=None):
        self.layers = list(layers)
        self.names = names or [f"l{i}" for i in range(len(self.layers))]

    def params(self):
        out = []
        for name, layer in zip(self.names, self.layers):
            out.extend((f"{name}.{pname}", p) for pname, p in layer.params())
        return out

    def forward(self, x, training=False, rng=None):
        caches = []
        for layer in self.layers:
            if isinstance(layer, Dropout):
                x, cache = layer.forward(x, training=training, rng=rng)
            else:
                x, cache = layer.forward(x, training=training)
            caches.append(cache)
        return x, caches

    def backward(self, caches, gy):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy = layer.backward(cache, gy)
        return gy

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self
