"""Minimal dense-tensor / differentiable-layer substrate.

Layers implement explicit forward/backward pairs over numpy arrays with
an exchangeable kernel backend (numpy or the compiled extension) for
the hot inner loops.
"""

from . import backend
from .tensor import Tensor

__all__ = ["backend", "Tensor"]
