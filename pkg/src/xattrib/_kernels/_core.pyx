# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for tiny single-instance forward/backward passes.

Semantics mirror xattrib._kernels.pure exactly; only per-call latency
differs. Keep both files in sync.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh

BACKEND = "compiled"

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_TANH = 3
ACT_SOFTMAX = 4

cdef int _IDENTITY = 0
cdef int _RELU = 1
cdef int _SIGMOID = 2
cdef int _TANH = 3
cdef int _SOFTMAX = 4


cdef inline double _sigmoid(double z) nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


def dense_forward(const double[:, ::1] W, const double[::1] b, const double[::1] x):
    cdef Py_ssize_t out_n = W.shape[0], in_n = W.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    pre_arr = np.empty(out_n)
    cdef double[::1] pre = pre_arr
    for i in range(out_n):
        acc = b[i]
        for j in range(in_n):
            acc += W[i, j] * x[j]
        pre[i] = acc
    return pre_arr


def matvec_transpose(const double[:, ::1] W, const double[::1] v):
    cdef Py_ssize_t out_n = W.shape[0], in_n = W.shape[1]
    cdef Py_ssize_t i, j
    gx_arr = np.zeros(in_n)
    cdef double[::1] gx = gx_arr
    for i in range(out_n):
        for j in range(in_n):
            gx[j] += W[i, j] * v[i]
    return gx_arr


def apply_activation(int code, const double[::1] pre):
    cdef Py_ssize_t n = pre.shape[0]
    cdef Py_ssize_t i
    cdef double m, s
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    if code == _IDENTITY:
        for i in range(n):
            out[i] = pre[i]
    elif code == _RELU:
        for i in range(n):
            out[i] = pre[i] if pre[i] > 0.0 else 0.0
    elif code == _SIGMOID:
        for i in range(n):
            out[i] = _sigmoid(pre[i])
    elif code == _TANH:
        for i in range(n):
            out[i] = tanh(pre[i])
    elif code == _SOFTMAX:
        m = pre[0]
        for i in range(1, n):
            if pre[i] > m:
                m = pre[i]
        s = 0.0
        for i in range(n):
            out[i] = exp(pre[i] - m)
            s += out[i]
        for i in range(n):
            out[i] /= s
    else:
        raise ValueError(f"unknown activation code {code}")
    return out_arr


def activation_vjp(int code, const double[::1] pre, const double[::1] out,
                   const double[::1] gout):
    cdef Py_ssize_t n = pre.shape[0]
    cdef Py_ssize_t i
    cdef double dot
    g_arr = np.empty(n)
    cdef double[::1] g = g_arr
    if code == _IDENTITY:
        for i in range(n):
            g[i] = gout[i]
    elif code == _RELU:
        for i in range(n):
            g[i] = gout[i] if pre[i] > 0.0 else 0.0
    elif code == _SIGMOID:
        for i in range(n):
            g[i] = gout[i] * out[i] * (1.0 - out[i])
    elif code == _TANH:
        for i in range(n):
            g[i] = gout[i] * (1.0 - out[i] * out[i])
    elif code == _SOFTMAX:
        dot = 0.0
        for i in range(n):
            dot += gout[i] * out[i]
        for i in range(n):
            g[i] = out[i] * (gout[i] - dot)
    else:
        raise ValueError(f"unknown activation code {code}")
    return g_arr


def conv2d_forward(const double[:, :, :, ::1] filters, const double[:, :, ::1] x,
                   int stride, int pad_h, int pad_w, int out_h, int out_w):
    cdef Py_ssize_t out_c = filters.shape[0], in_c = filters.shape[1]
    cdef Py_ssize_t kh = filters.shape[2], kw = filters.shape[3]
    cdef Py_ssize_t h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oc, ic, i, j, di, dj, si, sj
    cdef double acc
    y_arr = np.zeros((out_c, out_h, out_w))
    cdef double[:, :, ::1] y = y_arr
    for oc in range(out_c):
        for i in range(out_h):
            for j in range(out_w):
                acc = 0.0
                for ic in range(in_c):
                    for di in range(kh):
                        si = i * stride + di - pad_h
                        if si < 0 or si >= h:
                            continue
                        for dj in range(kw):
                            sj = j * stride + dj - pad_w
                            if sj < 0 or sj >= w:
                                continue
                            acc += filters[oc, ic, di, dj] * x[ic, si, sj]
                y[oc, i, j] = acc
    return y_arr


def conv2d_input_vjp(const double[:, :, :, ::1] filters, const double[:, :, ::1] gout,
                     int stride, int pad_h, int pad_w,
                     int in_c_, int in_h, int in_w):
    cdef Py_ssize_t out_c = filters.shape[0], in_c = filters.shape[1]
    cdef Py_ssize_t kh = filters.shape[2], kw = filters.shape[3]
    cdef Py_ssize_t out_h = gout.shape[1], out_w = gout.shape[2]
    cdef Py_ssize_t oc, ic, i, j, di, dj, si, sj
    cdef double g
    gx_arr = np.zeros((in_c_, in_h, in_w))
    cdef double[:, :, ::1] gx = gx_arr
    for oc in range(out_c):
        for i in range(out_h):
            for j in range(out_w):
                g = gout[oc, i, j]
                if g == 0.0:
                    continue
                for ic in range(in_c):
                    for di in range(kh):
                        si = i * stride + di - pad_h
                        if si < 0 or si >= in_h:
                            continue
                        for dj in range(kw):
                            sj = j * stride + dj - pad_w
                            if sj < 0 or sj >= in_w:
                                continue
                            gx[ic, si, sj] += filters[oc, ic, di, dj] * g
    return gx_arr


def maxpool2d_forward(const double[:, :, ::1] x, int window):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t out_h = h // window, out_w = w // window
    cdef Py_ssize_t ci, i, j, bi, bj, best_i, best_j
    cdef double best
    y_arr = np.empty((c, out_h, out_w))
    arg_arr = np.empty((c, out_h, out_w), dtype=np.int64)
    cdef double[:, :, ::1] y = y_arr
    cdef long long[:, :, ::1] arg = arg_arr
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                best = x[ci, i * window, j * window]
                best_i = i * window
                best_j = j * window
                for bi in range(i * window, (i + 1) * window):
                    for bj in range(j * window, (j + 1) * window):
                        if x[ci, bi, bj] > best:  # strict: ties keep lowest
                            best = x[ci, bi, bj]
                            best_i = bi
                            best_j = bj
                y[ci, i, j] = best
                arg[ci, i, j] = ci * h * w + best_i * w + best_j
    return y_arr, arg_arr


def maxpool2d_input_vjp(const long long[:, :, ::1] argmax, const double[:, :, ::1] gout,
                        int in_c, int in_h, int in_w):
    cdef Py_ssize_t c = gout.shape[0], out_h = gout.shape[1]
    cdef Py_ssize_t out_w = gout.shape[2]
    cdef Py_ssize_t ci, i, j
    gx_arr = np.zeros(in_c * in_h * in_w)
    cdef double[::1] gx = gx_arr
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                gx[argmax[ci, i, j]] += gout[ci, i, j]
    return gx_arr.reshape(in_c, in_h, in_w)


def avgpool2d_forward(const double[:, :, ::1] x, int window):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t out_h = h // window, out_w = w // window
    cdef Py_ssize_t ci, i, j, bi, bj
    cdef double acc, inv = 1.0 / (window * window)
    y_arr = np.empty((c, out_h, out_w))
    cdef double[:, :, ::1] y = y_arr
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                acc = 0.0
                for bi in range(i * window, (i + 1) * window):
                    for bj in range(j * window, (j + 1) * window):
                        acc += x[ci, bi, bj]
                y[ci, i, j] = acc * inv
    return y_arr


def avgpool2d_input_vjp(const double[:, :, ::1] gout, int window,
                        int in_c, int in_h, int in_w):
    cdef Py_ssize_t c = gout.shape[0], out_h = gout.shape[1]
    cdef Py_ssize_t out_w = gout.shape[2]
    cdef Py_ssize_t ci, i, j, bi, bj
    cdef double inv = 1.0 / (window * window), g
    gx_arr = np.zeros((in_c, in_h, in_w))
    cdef double[:, :, ::1] gx = gx_arr
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                g = gout[ci, i, j] * inv
                for bi in range(i * window, (i + 1) * window):
                    for bj in range(j * window, (j + 1) * window):
                        gx[ci, bi, bj] = g
    return gx_arr
