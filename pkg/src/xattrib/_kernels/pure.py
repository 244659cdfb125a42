"""Numpy fallback implementations of the hot single-instance kernels.

These are the reference semantics for ``_core.pyx``; the two backends must
agree to float tolerance on every input (see tests/test_kernels.py).
Batched operations are deliberately absent: batch math goes straight to
BLAS via numpy in the calling code, the compiled core only targets the
per-call latency of tiny single-instance ops.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_TANH = 3
ACT_SOFTMAX = 4


def dense_forward(W, b, x):
    """Pre-activation W @ x + b."""
    return W @ x + b


def matvec_transpose(W, v):
    """W.T @ v, the input cotangent of a dense pre-activation."""
    return W.T @ v


def apply_activation(code, pre):
    if code == ACT_IDENTITY:
        return pre.copy()
    if code == ACT_RELU:
        return np.maximum(pre, 0.0)
    if code == ACT_SIGMOID:
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        ez = np.exp(pre[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if code == ACT_TANH:
        return np.tanh(pre)
    if code == ACT_SOFTMAX:
        shifted = pre - pre.max()
        e = np.exp(shifted)
        return e / e.sum()
    raise ValueError(f"unknown activation code {code}")


def activation_vjp(code, pre, out, gout):
    """Cotangent of the pre-activation given the output cotangent.

    relu uses the subgradient 0 at exactly 0.
    """
    if code == ACT_IDENTITY:
        return gout.copy()
    if code == ACT_RELU:
        return np.where(pre > 0.0, gout, 0.0)
    if code == ACT_SIGMOID:
        return gout * out * (1.0 - out)
    if code == ACT_TANH:
        return gout * (1.0 - out * out)
    if code == ACT_SOFTMAX:
        return out * (gout - float(np.dot(gout, out)))
    raise ValueError(f"unknown activation code {code}")


def _conv_pads(h, w, kh, kw, stride, pad_h, pad_w, out_h, out_w):
    """Bottom/right padding; asymmetric when same-padding an even
    kernel (the top/left pad is the floor half)."""
    pad_b = max((out_h - 1) * stride + kh - h - pad_h, 0)
    pad_r = max((out_w - 1) * stride + kw - w - pad_w, 0)
    return pad_b, pad_r


def conv2d_forward(filters, x, stride, pad_h, pad_w, out_h, out_w):
    """Direct convolution, channel-first, implicit zero padding.

    filters: (out_c, in_c, kh, kw); x: (in_c, h, w).
    """
    out_c, in_c, kh, kw = filters.shape
    _, h, w = x.shape
    pad_b, pad_r = _conv_pads(h, w, kh, kw, stride, pad_h, pad_w,
                              out_h, out_w)
    xp = np.zeros((in_c, pad_h + h + pad_b, pad_w + w + pad_r))
    xp[:, pad_h : pad_h + h, pad_w : pad_w + w] = x
    y = np.zeros((out_c, out_h, out_w))
    for di in range(kh):
        for dj in range(kw):
            patch = xp[
                :,
                di : di + stride * out_h : stride,
                dj : dj + stride * out_w : stride,
            ]
            y += np.einsum("oc,cij->oij", filters[:, :, di, dj], patch)
    return y


def conv2d_input_vjp(filters, gout, stride, pad_h, pad_w, in_c, in_h, in_w):
    out_c, _, kh, kw = filters.shape
    _, out_h, out_w = gout.shape
    pad_b, pad_r = _conv_pads(in_h, in_w, kh, kw, stride, pad_h, pad_w,
                              out_h, out_w)
    gxp = np.zeros((in_c, pad_h + in_h + pad_b, pad_w + in_w + pad_r))
    for di in range(kh):
        for dj in range(kw):
            # scatter-add each kernel tap's contribution back to the input
            gxp[
                :,
                di : di + stride * out_h : stride,
                dj : dj + stride * out_w : stride,
            ] += np.einsum("oc,oij->cij", filters[:, :, di, dj], gout)
    return gxp[:, pad_h : pad_h + in_h, pad_w : pad_w + in_w].copy()


def maxpool2d_forward(x, window):
    """Non-overlapping max pooling; trailing cells that do not fill a
    window are dropped. Ties resolve to the lowest flat index.

    Returns (pooled, argmax) where argmax holds flat indices into x.
    """
    c, h, w = x.shape
    out_h, out_w = h // window, w // window
    y = np.empty((c, out_h, out_w))
    arg = np.empty((c, out_h, out_w), dtype=np.int64)
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                block = x[
                    ci,
                    i * window : (i + 1) * window,
                    j * window : (j + 1) * window,
                ]
                k = int(np.argmax(block))  # first occurrence: lowest index
                bi, bj = divmod(k, window)
                y[ci, i, j] = block[bi, bj]
                arg[ci, i, j] = (
                    ci * h * w + (i * window + bi) * w + (j * window + bj)
                )
    return y, arg


def maxpool2d_input_vjp(argmax, gout, in_c, in_h, in_w):
    gx = np.zeros(in_c * in_h * in_w)
    np.add.at(gx, argmax.ravel(), gout.ravel())
    return gx.reshape(in_c, in_h, in_w)


def avgpool2d_forward(x, window):
    c, h, w = x.shape
    out_h, out_w = h // window, w // window
    trimmed = x[:, : out_h * window, : out_w * window]
    return trimmed.reshape(c, out_h, window, out_w, window).mean(axis=(2, 4))


def avgpool2d_input_vjp(gout, window, in_c, in_h, in_w):
    c, out_h, out_w = gout.shape
    gx = np.zeros((in_c, in_h, in_w))
    spread = np.repeat(np.repeat(gout, window, axis=1), window, axis=2)
    gx[:, : out_h * window, : out_w * window] = spread / (window * window)
    return gx
