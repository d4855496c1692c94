"""Vectorized numpy implementation of the hot kernels.

This is the fallback (and, for the GEMM-shaped kernels, usually the
fastest) backend; a compiled twin lives in ``_ckernels.pyx`` with the
same signatures. Everything here is deterministic: no reductions whose
order depends on threading.
"""

import numpy as np

NAME = "numpy"


def _patches(x, kh, kw, sh, sw):
    n, h, w, c = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    sn, sh_, sw_, sc = x.strides
    shape = (n, ho, wo, kh, kw, c)
    strides = (sn, sh_ * sh, sw_ * sw, sh_, sw_, sc)
    return np.lib.stride_tricks.as_strided(x, shape, strides, writeable=False)


def conv2d_forward(x, kernels, bias, sh, sw):
    """Valid cross-correlation of NHWC input with (kh,kw,cin,cout) kernels."""
    x = np.ascontiguousarray(x)
    kh, kw, _, _ = kernels.shape
    p = _patches(x, kh, kw, sh, sw)
    y = np.tensordot(p, kernels, axes=([3, 4, 5], [0, 1, 2]))
    y += bias
    return np.ascontiguousarray(y)


def conv2d_backward_input(gy, kernels, x_shape, sh, sw):
    """Gradient wrt input; scatters each kernel tap with strided slices."""
    n, h, w, c = x_shape
    kh, kw, _, _ = kernels.shape
    _, ho, wo, _ = gy.shape
    gx = np.zeros(x_shape, dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = gy @ kernels[i, j].T
            gx[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :] += contrib
    return gx


def conv2d_backward_params(x, gy, kh, kw, sh, sw):
    """Gradients wrt kernels and bias."""
    x = np.ascontiguousarray(x)
    p = _patches(x, kh, kw, sh, sw)
    gk = np.tensordot(p, gy, axes=([0, 1, 2], [0, 1, 2]))
    gb = gy.sum(axis=(0, 1, 2))
    return np.ascontiguousarray(gk), gb


def caps_weighted_sum(c, u):
    """Contract primary capsules: (n,p,q),(n,p,q,d) -> (n,q,d)."""
    return np.einsum("npq,npqd->nqd", c, u, optimize=True)


def caps_agreement(u, v):
    """Dot each prediction with a digit vector: (n,p,q,d),(n,q,d) -> (n,p,q)."""
    return np.einsum("npqd,nqd->npq", u, v, optimize=True)


def caps_outer_acc(gu, w, y):
    """Accumulate gu += w[...,None] * y[:,None] without temporaries."""
    gu += np.einsum("npq,nqd->npqd", w, y, optimize=True)
    return gu


def rk4_lti(a, b, x0, dt, steps):
    """Classic fixed-step RK4 on the LTI system xdot = A x + b.

    Returns an array of shape (steps+1, n) holding every state.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty((steps + 1, x.size), dtype=np.float64)
    out[0] = x
    half = 0.5 * dt
    sixth = dt / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            k1 = a @ x + b
            k2 = a @ (x + half * k1) + b
            k3 = a @ (x + half * k2) + b
            k4 = a @ (x + dt * k3) + b
            x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            out[k + 1] = x
            if not np.all(np.isfinite(x)):
                out[k + 2:] = np.nan
                break
    return out
