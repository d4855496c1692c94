# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of kernels_py with identical signatures.

Scalar loops over typed memoryviews; single threaded so results are
bitwise reproducible regardless of the environment.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

NAME = "cython"

ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] kernels,
                   floating[::1] bias, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t kh = kernels.shape[0], kw = kernels.shape[1], co = kernels.shape[3]
    cdef Py_ssize_t ho = (h - kh) // sh + 1
    cdef Py_ssize_t wo = (w - kw) // sw + 1
    if floating is float:
        out_arr = np.empty((n, ho, wo, co), dtype=np.float32)
    else:
        out_arr = np.empty((n, ho, wo, co), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b0, i, j, p, q, ci, k
    cdef floating xv
    for b0 in range(n):
        for i in range(ho):
            for j in range(wo):
                for k in range(co):
                    out[b0, i, j, k] = bias[k]
                for p in range(kh):
                    for q in range(kw):
                        for ci in range(c):
                            xv = x[b0, i * sh + p, j * sw + q, ci]
                            for k in range(co):
                                out[b0, i, j, k] += xv * kernels[p, q, ci, k]
    return out_arr


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] kernels,
                          x_shape, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = gy.shape[0], ho = gy.shape[1], wo = gy.shape[2], co = gy.shape[3]
    cdef Py_ssize_t kh = kernels.shape[0], kw = kernels.shape[1], c = kernels.shape[2]
    if floating is float:
        gx_arr = np.zeros(tuple(x_shape), dtype=np.float32)
    else:
        gx_arr = np.zeros(tuple(x_shape), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b0, i, j, p, q, ci, k
    cdef floating acc
    for b0 in range(n):
        for i in range(ho):
            for j in range(wo):
                for p in range(kh):
                    for q in range(kw):
                        for ci in range(c):
                            acc = 0
                            for k in range(co):
                                acc += gy[b0, i, j, k] * kernels[p, q, ci, k]
                            gx[b0, i * sh + p, j * sw + q, ci] += acc
    return gx_arr


def conv2d_backward_params(floating[:, :, :, ::1] x, floating[:, :, :, ::1] gy,
                           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[3]
    cdef Py_ssize_t ho = gy.shape[1], wo = gy.shape[2], co = gy.shape[3]
    if floating is float:
        gk_arr = np.zeros((kh, kw, c, co), dtype=np.float32)
        gb_arr = np.zeros(co, dtype=np.float32)
    else:
        gk_arr = np.zeros((kh, kw, c, co), dtype=np.float64)
        gb_arr = np.zeros(co, dtype=np.float64)
    cdef floating[:, :, :, ::1] gk = gk_arr
    cdef floating[::1] gb = gb_arr
    cdef Py_ssize_t b0, i, j, p, q, ci, k
    cdef floating xv, gv
    for b0 in range(n):
        for i in range(ho):
            for j in range(wo):
                for k in range(co):
                    gb[k] += gy[b0, i, j, k]
                for p in range(kh):
                    for q in range(kw):
                        for ci in range(c):
                            xv = x[b0, i * sh + p, j * sw + q, ci]
                            for k in range(co):
                                gk[p, q, ci, k] += xv * gy[b0, i, j, k]
    return gk_arr, gb_arr


def caps_weighted_sum(floating[:, :, ::1] c, floating[:, :, :, ::1] u):
    cdef Py_ssize_t n = u.shape[0], p = u.shape[1], q = u.shape[2], d = u.shape[3]
    if floating is float:
        out_arr = np.zeros((n, q, d), dtype=np.float32)
    else:
        out_arr = np.zeros((n, q, d), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t b0, i, j, k
    cdef floating w
    for b0 in range(n):
        for i in range(p):
            for j in range(q):
                w = c[b0, i, j]
                for k in range(d):
                    out[b0, j, k] += w * u[b0, i, j, k]
    return out_arr


def caps_agreement(floating[:, :, :, ::1] u, floating[:, :, ::1] v):
    cdef Py_ssize_t n = u.shape[0], p = u.shape[1], q = u.shape[2], d = u.shape[3]
    if floating is float:
        out_arr = np.empty((n, p, q), dtype=np.float32)
    else:
        out_arr = np.empty((n, p, q), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t b0, i, j, k
    cdef floating acc
    for b0 in range(n):
        for i in range(p):
            for j in range(q):
                acc = 0
                for k in range(d):
                    acc += u[b0, i, j, k] * v[b0, j, k]
                out[b0, i, j] = acc
    return out_arr


def caps_outer_acc(gu_arr, floating[:, :, ::1] w, floating[:, :, ::1] y):
    cdef floating[:, :, :, ::1] gu = gu_arr
    cdef Py_ssize_t n = gu.shape[0], p = gu.shape[1], q = gu.shape[2], d = gu.shape[3]
    cdef Py_ssize_t b0, i, j, k
    cdef floating wv
    for b0 in range(n):
        for i in range(p):
            for j in range(q):
                wv = w[b0, i, j]
                for k in range(d):
                    gu[b0, i, j, k] += wv * y[b0, j, k]
    return gu_arr


def rk4_lti(a, b, x0, double dt, Py_ssize_t steps):
    a_arr = np.ascontiguousarray(a, dtype=np.float64)
    b_arr = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] am = a_arr
    cdef double[::1] bm = b_arr
    cdef Py_ssize_t n = am.shape[0]
    out_arr = np.empty((steps + 1, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    x_arr = np.ascontiguousarray(x0, dtype=np.float64).copy()
    cdef double[::1] x = x_arr
    scratch = np.empty((5, n), dtype=np.float64)
    cdef double[:, ::1] s = scratch
    cdef Py_ssize_t k, i, j
    cdef double half = 0.5 * dt, sixth = dt / 6.0, acc
    cdef bint finite
    for i in range(n):
        out[0, i] = x[i]
    for k in range(steps):
        _matvec(am, x, bm, s[0], n)                      # k1
        for i in range(n):
            s[4, i] = x[i] + half * s[0, i]
        _matvec(am, s[4], bm, s[1], n)                   # k2
        for i in range(n):
            s[4, i] = x[i] + half * s[1, i]
        _matvec(am, s[4], bm, s[2], n)                   # k3
        for i in range(n):
            s[4, i] = x[i] + dt * s[2, i]
        _matvec(am, s[4], bm, s[3], n)                   # k4
        finite = True
        for i in range(n):
            x[i] = x[i] + sixth * (s[0, i] + 2.0 * (s[1, i] + s[2, i]) + s[3, i])
            out[k + 1, i] = x[i]
            if not isfinite(x[i]):
                finite = False
        if not finite:
            out_arr[k + 2:] = np.nan
            break
    return out_arr


cdef inline void _matvec(double[:, ::1] a, double[::1] x, double[::1] b,
                         double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = b[i]
        for j in range(n):
            acc += a[i, j] * x[j]
        out[i] = acc
