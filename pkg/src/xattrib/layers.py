"""Layer variants of the inference core.

Layers are immutable parameter holders; the forward/backward math lives
in network.py, the hot numeric primitives in _kernels. Parameter arrays
are frozen (read-only) at construction.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, ValidationError, as_array

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "softmax")
ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def _param(values, name, ndim):
    arr = np.array(as_array(values, name), dtype=np.float64, order="C")
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must have {ndim} dims, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_activation(activation):
    if activation not in ACTIVATIONS:
        raise ValidationError(
            f"activation must be one of {ACTIVATIONS}, got {activation!r}"
        )


class Dense:
    """Fully connected layer: activation(W @ x + b), W is out x in."""

    kind = "dense"

    def __init__(self, weights, bias=None, activation="identity"):
        self.weights = _param(weights, "weights", 2)
        out_n, in_n = self.weights.shape
        if bias is None:
            bias = np.zeros(out_n)
        self.bias = _param(bias, "bias", 1)
        if self.bias.shape != (out_n,):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weights "
                f"out dim {out_n}"
            )
        _check_activation(activation)
        self.activation = activation
        self.in_size = in_n
        self.out_size = out_n

    def output_shape(self, in_shape):
        if in_shape != (self.in_size,):
            raise ShapeError(
                f"dense layer expects input shape ({self.in_size},), "
                f"got {in_shape}"
            )
        return (self.out_size,)


class Conv2D:
    """Linear 2D convolution, channel-first, direct (non-FFT) evaluation
    with explicit zero padding. Padding is 'valid' or 'same'."""

    kind = "conv2d"

    def __init__(self, filters, stride=1, padding="valid"):
        self.filters = _param(filters, "filters", 4)
        if stride < 1:
            raise ValidationError(f"stride must be >= 1, got {stride}")
        if padding not in ("valid", "same"):
            raise ValidationError(
                f"padding must be 'valid' or 'same', got {padding!r}"
            )
        self.stride = int(stride)
        self.padding = padding

    def geometry(self, in_shape):
        """(out_shape, pad_h, pad_w) for a (c, h, w) input."""
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (c, h, w) input, got {in_shape}")
        c, h, w = in_shape
        out_c, in_c, kh, kw = self.filters.shape
        if c != in_c:
            raise ShapeError(
                f"conv2d expects {in_c} input channels, got {c}"
            )
        s = self.stride
        if self.padding == "valid":
            if h < kh or w < kw:
                raise ShapeError(
                    f"input {h}x{w} smaller than kernel {kh}x{kw} "
                    "with valid padding"
                )
            out_h = (h - kh) // s + 1
            out_w = (w - kw) // s + 1
            return (out_c, out_h, out_w), 0, 0
        out_h = -(-h // s)
        out_w = -(-w // s)
        pad_h = max((out_h - 1) * s + kh - h, 0) // 2
        pad_w = max((out_w - 1) * s + kw - w, 0) // 2
        return (out_c, out_h, out_w), pad_h, pad_w

    def output_shape(self, in_shape):
        return self.geometry(in_shape)[0]


class _Pool2D:
    def __init__(self, window):
        if window < 1:
            raise ValidationError(f"pool window must be >= 1, got {window}")
        self.window = int(window)

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(
                f"{self.kind} expects (c, h, w) input, got {in_shape}"
            )
        c, h, w = in_shape
        if h < self.window or w < self.window:
            raise ShapeError(
                f"{self.kind} window {self.window} larger than input "
                f"{h}x{w}"
            )
        return (c, h // self.window, w // self.window)


class MaxPool2D(_Pool2D):
    """Non-overlapping max pooling; argmax ties break to the lowest
    flat index so backward passes are deterministic."""

    kind = "maxpool2d"


class AvgPool2D(_Pool2D):
    kind = "avgpool2d"


class SumPool:
    """Sum pooling: a vector collapses to its total, a higher-rank tensor
    is summed over its leading axis (e.g. node readout for graph nets)."""

    kind = "sumpool"

    def output_shape(self, in_shape):
        if len(in_shape) == 1:
            return (1,)
        return tuple(in_shape[1:])


class LSTMCell:
    """Single LSTM cell with signal, input-gate, forget-gate and
    output-gate maps, each applied to concat(x_t, a_prev).

    As a network layer it scans a (T, d_in) sequence from zero state and
    emits the final hidden vector.
    """

    kind = "lstm"

    def __init__(self, w_signal, w_gate, w_forget, w_output,
                 b_signal=None, b_gate=None, b_forget=None, b_output=None):
        self.w_signal = _param(w_signal, "w_signal", 2)
        self.w_gate = _param(w_gate, "w_gate", 2)
        self.w_forget = _param(w_forget, "w_forget", 2)
        self.w_output = _param(w_output, "w_output", 2)
        hidden, total = self.w_signal.shape
        for name in ("w_gate", "w_forget", "w_output"):
            if getattr(self, name).shape != (hidden, total):
                raise ShapeError(
                    f"{name} shape {getattr(self, name).shape} does not "
                    f"match w_signal shape {(hidden, total)}"
                )
        if total <= hidden:
            raise ShapeError(
                f"gate maps need width d_in + hidden > hidden, got "
                f"{total} with hidden {hidden}"
            )
        self.hidden = hidden
        self.in_size = total - hidden
        biases = []
        for b, name in ((b_signal, "b_signal"), (b_gate, "b_gate"),
                        (b_forget, "b_forget"), (b_output, "b_output")):
            b = np.zeros(hidden) if b is None else _param(b, name, 1)
            if b.shape != (hidden,):
                raise ShapeError(
                    f"{name} shape {b.shape} does not match hidden {hidden}"
                )
            b.setflags(write=False)
            biases.append(b)
        self.b_signal, self.b_gate, self.b_forget, self.b_output = biases

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_size:
            raise ShapeError(
                f"lstm expects (T, {self.in_size}) input, got {in_shape}"
            )
        return (self.hidden,)


class GraphConv:
    """Graph convolution activation(L @ H @ W); L is supplied per input
    graph at forward time."""

    kind = "graphconv"

    def __init__(self, weights, activation="relu"):
        self.weights = _param(weights, "weights", 2)
        _check_activation(activation)
        self.activation = activation

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.weights.shape[0]:
            raise ShapeError(
                f"graphconv expects (n, {self.weights.shape[0]}) input, "
                f"got {in_shape}"
            )
        return (in_shape[0], self.weights.shape[1])


class Attention:
    """Multi-head scaled dot-product attention.

    Per head i: softmax(Q Wq_i (K Wk_i)^T / sqrt(dk)) V Wv_i; head outputs
    are concatenated and projected by w_out. Used inside a network as
    self-attention over a (T, d_model) sequence.
    """

    kind = "attention"

    def __init__(self, w_query, w_key, w_value, w_out):
        self.w_query = _param(w_query, "w_query", 3)
        self.w_key = _param(w_key, "w_key", 3)
        self.w_value = _param(w_value, "w_value", 3)
        self.w_out = _param(w_out, "w_out", 2)
        heads, d_model, dk = self.w_query.shape
        if dk == 0 or self.w_query.size == 0:
            raise ShapeError("dk must be >= 1")
        if self.w_key.shape != (heads, d_model, dk):
            raise ShapeError(
                f"w_key shape {self.w_key.shape} does not match w_query "
                f"{(heads, d_model, dk)}"
            )
        if self.w_value.shape[:2] != (heads, d_model):
            raise ShapeError(
                f"w_value shape {self.w_value.shape} inconsistent with "
                f"{heads} heads and d_model {d_model}"
            )
        dv = self.w_value.shape[2]
        if self.w_out.shape != (heads * dv, d_model):
            raise ShapeError(
                f"w_out shape {self.w_out.shape} must be "
                f"{(heads * dv, d_model)}"
            )
        self.heads = heads
        self.d_model = d_model
        self.dk = dk
        self.dv = dv

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.d_model:
            raise ShapeError(
                f"attention expects (T, {self.d_model}) input, got {in_shape}"
            )
        return in_shape


class Embedding:
    """Token-id lookup table. Input is a (T,) vector of integral ids;
    gradients with respect to the ids are undefined."""

    kind = "embedding"

    def __init__(self, table):
        self.table = _param(table, "table", 2)

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"embedding expects (T,) input, got {in_shape}")
        return (in_shape[0], self.table.shape[1])

    def lookup(self, x):
        ids = np.asarray(x)
        if not np.all(ids == np.round(ids)):
            raise ValidationError("embedding input must hold integral ids")
        idx = ids.astype(np.int64)
        if idx.min() < 0 or idx.max() >= self.table.shape[0]:
            raise ValidationError(
                f"token id outside [0, {self.table.shape[0]}) in {idx.tolist()}"
            )
        return idx


class Flatten:
    kind = "flatten"

    def output_shape(self, in_shape):
        return (math.prod(in_shape),)


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Dense, Conv2D, MaxPool2D, AvgPool2D, SumPool, LSTMCell,
                GraphConv, Attention, Embedding, Flatten)
}
