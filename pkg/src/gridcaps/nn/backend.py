"""Kernel backend selection.

Two interchangeable kernel sets exist: the numpy one (BLAS-backed, fast
for the GEMM-shaped convolution/routing contractions) and the compiled
Cython one (fast for the sequential ODE stepping loop, where numpy pays
per-step call overhead). ``GRIDCAPS_BACKEND`` picks one wholesale:

    auto    (default) per-kernel winners measured by benchmarks/bench_kernels.py
    numpy   pure numpy everywhere (always available)
    cython  compiled everywhere (errors out if the extension is missing)
"""

import os

from . import kernels_py

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_CONV_OPS = ("conv2d_forward", "conv2d_backward_input", "conv2d_backward_params")
_CAPS_OPS = ("caps_weighted_sum", "caps_agreement", "caps_outer_acc")
_ODE_OPS = ("rk4_lti",)


class Backend:
    """Resolved kernel table; attributes are the kernel callables."""

    def __init__(self, mode):
        if mode not in ("auto", "numpy", "cython"):
            raise ValueError(f"unknown backend mode {mode!r}")
        if mode == "cython" and _ckernels is None:
            raise ImportError("compiled kernel extension is not available")
        self.mode = mode
        self.has_compiled = _ckernels is not None
        table = {}
        for op in _CONV_OPS + _CAPS_OPS + _ODE_OPS:
            if mode == "numpy" or _ckernels is None:
                impl = kernels_py
            elif mode == "cython":
                impl = _ckernels
            else:
                # auto: measured winners (benchmarks/bench_kernels.py) — BLAS
                # takes the GEMM-shaped convolutions, the compiled loops take
                # the routing contractions and sequential ODE stepping.
                impl = kernels_py if op in _CONV_OPS else _ckernels
            table[op] = getattr(impl, op)
            setattr(self, op, table[op])
        self.sources = {op: fn.__module__ for op, fn in table.items()}

    def describe(self):
        compiled = "present" if self.has_compiled else "absent"
        picks = ", ".join(f"{op}={mod.rsplit('.', 1)[-1]}" for op, mod in self.sources.items())
        return f"mode={self.mode} extension={compiled} [{picks}]"


_active = None


def active() -> Backend:
    global _active
    if _active is None:
        _active = Backend(os.environ.get("GRIDCAPS_BACKEND", "auto"))
    return _active


def set_backend(mode) -> Backend:
    """Force a backend mode (used by tests and the benchmark)."""
    global _active
    _active = Backend(mode)
    return _active
