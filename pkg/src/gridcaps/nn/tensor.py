"""Dense array with a gradient slot."""

import numpy as np


class Tensor:
    """A parameter or activation: values plus an optional same-shape grad."""

    __slots__ = ("values", "grad")

    def __init__(self, values, grad=None):
        self.values = np.asarray(values)
        if grad is not None:
            grad = np.asarray(grad)
            if grad.shape != self.values.shape:
                raise ValueError(f"grad shape {grad.shape} != value shape {self.values.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def ensure_grad(self):
        if self.grad is None or self.grad.shape != self.values.shape:
            self.grad = np.zeros_like(self.values)
        return self.grad

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        else:
            self.grad.fill(0)

    def add_grad(self, g):
        self.ensure_grad()
        self.grad += g

    def astype(self, dtype):
        return Tensor(self.values.astype(dtype))

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype})"
