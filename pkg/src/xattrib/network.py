"""Sequential network container, forward activation capture and
reverse-mode gradients over the recorded trace.

The gradient pass replays the layer list backwards applying each layer's
vector-Jacobian product, so one backward sweep yields the derivative of a
single scalar output with respect to every intermediate activation (what
Grad-CAM, integrated gradients and the counterfactual search consume).
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .layers import ACT_CODES, Attention, GraphConv, LSTMCell
from .tensor import (ShapeError, Tensor, UnsupportedError, ValidationError,
                     as_array)


class Network:
    """Ordered layer list with static shape checking.

    Immutable after construction; forward/gradient are pure, so instances
    are safe to share across threads.
    """

    def __init__(self, layers, input_shape, last_conv_index=None,
                 feature_names=None, class_names=None):
        layers = list(layers)
        if not layers:
            raise ShapeError("network needs at least one layer")
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        shapes = [self.input_shape]
        for i, layer in enumerate(layers):
            try:
                shapes.append(layer.output_shape(shapes[-1]))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        self.layer_shapes = shapes
        self.output_shape = shapes[-1]
        self.output_size = math.prod(self.output_shape)
        if last_conv_index is not None:
            last_conv_index = int(last_conv_index)
            if not 0 <= last_conv_index < len(layers):
                raise ValidationError(
                    f"last_conv_index {last_conv_index} out of range"
                )
            if layers[last_conv_index].kind != "conv2d":
                raise ValidationError(
                    f"last_conv_index {last_conv_index} is a "
                    f"{layers[last_conv_index].kind} layer, not conv2d"
                )
        self.last_conv_index = last_conv_index
        self.feature_names = list(feature_names) if feature_names else None
        self.class_names = list(class_names) if class_names else None

    @property
    def n_layers(self):
        return len(self.layers)

    def has_kind(self, kind):
        return any(layer.kind == kind for layer in self.layers)

    def is_dense_chain(self):
        return all(layer.kind == "dense" for layer in self.layers)


class ActivationTrace:
    """Input plus every layer output captured during one forward pass."""

    def __init__(self, activations, aux, laplacian=None):
        self.activations = activations  # list[Tensor], input at index 0
        self.aux = aux                  # per-layer auxiliary forward state
        self.laplacian = laplacian

    @property
    def output(self) -> Tensor:
        return self.activations[-1]

    def __len__(self):
        return len(self.activations)


def _softmax_rows(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _lstm_cell_step(cell, x_t, a_prev, c_prev):
    u = np.ascontiguousarray(np.concatenate([x_t, a_prev]))
    z_signal = K.dense_forward(cell.w_signal, cell.b_signal, u)
    z_gate = K.dense_forward(cell.w_gate, cell.b_gate, u)
    z_forget = K.dense_forward(cell.w_forget, cell.b_forget, u)
    z_out = K.dense_forward(cell.w_output, cell.b_output, u)
    signal = np.tanh(z_signal)
    gate = K.apply_activation(K.ACT_SIGMOID, z_gate)
    forget = K.apply_activation(K.ACT_SIGMOID, z_forget)
    out_gate = K.apply_activation(K.ACT_SIGMOID, z_out)
    produce = signal * gate
    c = forget * c_prev + produce
    tanh_c = np.tanh(c)
    a = out_gate * tanh_c
    return a, c, {
        "u": u, "signal": signal, "gate": gate, "forget": forget,
        "out_gate": out_gate, "produce": produce, "c_prev": c_prev,
        "c": c, "tanh_c": tanh_c,
    }


def _attention_apply(layer, q_in, k_in, v_in):
    inv = 1.0 / math.sqrt(layer.dk)
    head_outs, head_aux = [], []
    for i in range(layer.heads):
        qh = q_in @ layer.w_query[i]
        kh = k_in @ layer.w_key[i]
        vh = v_in @ layer.w_value[i]
        weights = _softmax_rows(qh @ kh.T * inv)
        head_outs.append(weights @ vh)
        head_aux.append((qh, kh, vh, weights))
    concat = np.concatenate(head_outs, axis=1)
    return concat @ layer.w_out, {"heads": head_aux}


def _attention_vjp(layer, q_in, k_in, v_in, aux, gout):
    inv = 1.0 / math.sqrt(layer.dk)
    gconcat = gout @ layer.w_out.T
    gq = np.zeros_like(q_in)
    gk = np.zeros_like(k_in)
    gv = np.zeros_like(v_in)
    dv = layer.dv
    for i in range(layer.heads):
        qh, kh, vh, weights = aux["heads"][i]
        g_head = gconcat[:, i * dv : (i + 1) * dv]
        g_weights = g_head @ vh.T
        g_vh = weights.T @ g_head
        g_scores = weights * (
            g_weights - (g_weights * weights).sum(axis=1, keepdims=True)
        )
        g_qh = g_scores @ kh * inv
        g_kh = g_scores.T @ qh * inv
        gq += g_qh @ layer.w_query[i].T
        gk += g_kh @ layer.w_key[i].T
        gv += g_vh @ layer.w_value[i].T
    return gq, gk, gv


def _layer_forward(layer, x, laplacian):
    kind = layer.kind
    if kind == "dense":
        pre = K.dense_forward(layer.weights, layer.bias,
                              np.ascontiguousarray(x))
        return K.apply_activation(ACT_CODES[layer.activation], pre), \
            {"pre": pre}
    if kind == "conv2d":
        (out_shape, pad_h, pad_w) = layer.geometry(x.shape)
        y = K.conv2d_forward(layer.filters, np.ascontiguousarray(x),
                             layer.stride, pad_h, pad_w,
                             out_shape[1], out_shape[2])
        return y, {"pads": (pad_h, pad_w)}
    if kind == "maxpool2d":
        y, argmax = K.maxpool2d_forward(np.ascontiguousarray(x), layer.window)
        return y, {"argmax": argmax}
    if kind == "avgpool2d":
        return K.avgpool2d_forward(np.ascontiguousarray(x), layer.window), {}
    if kind == "sumpool":
        if x.ndim == 1:
            return np.array([x.sum()]), {}
        return x.sum(axis=0), {}
    if kind == "flatten":
        return x.reshape(-1).copy(), {}
    if kind == "embedding":
        idx = layer.lookup(x)
        return layer.table[idx].copy(), {"ids": idx}
    if kind == "lstm":
        a = np.zeros(layer.hidden)
        c = np.zeros(layer.hidden)
        steps = []
        for t in range(x.shape[0]):
            a, c, step_aux = _lstm_cell_step(layer, x[t], a, c)
            steps.append(step_aux)
        return a.copy(), {"steps": steps}
    if kind == "graphconv":
        if laplacian is None:
            raise ShapeError("graphconv layer needs a laplacian at forward "
                             "time")
        z = laplacian @ x
        pre = z @ layer.weights
        out = _act_batch(ACT_CODES[layer.activation], pre)
        return out, {"z": z, "pre": pre}
    if kind == "attention":
        out, aux = _attention_apply(layer, x, x, x)
        return out, aux
    raise UnsupportedError(f"unknown layer kind {kind!r}")


def _layer_input_vjp(layer, x, out, aux, gout, laplacian):
    kind = layer.kind
    if kind == "dense":
        gpre = K.activation_vjp(ACT_CODES[layer.activation], aux["pre"],
                                out, np.ascontiguousarray(gout))
        return K.matvec_transpose(layer.weights, gpre)
    if kind == "conv2d":
        pad_h, pad_w = aux["pads"]
        return K.conv2d_input_vjp(layer.filters, np.ascontiguousarray(gout),
                                  layer.stride, pad_h, pad_w,
                                  x.shape[0], x.shape[1], x.shape[2])
    if kind == "maxpool2d":
        return K.maxpool2d_input_vjp(aux["argmax"],
                                     np.ascontiguousarray(gout),
                                     x.shape[0], x.shape[1], x.shape[2])
    if kind == "avgpool2d":
        return K.avgpool2d_input_vjp(np.ascontiguousarray(gout),
                                     layer.window,
                                     x.shape[0], x.shape[1], x.shape[2])
    if kind == "sumpool":
        if x.ndim == 1:
            return np.full(x.shape, gout[0])
        return np.broadcast_to(gout, x.shape).copy()
    if kind == "flatten":
        return gout.reshape(x.shape).copy()
    if kind == "embedding":
        raise UnsupportedError(
            "gradient with respect to embedding token ids is undefined"
        )
    if kind == "lstm":
        return _lstm_input_vjp(layer, x, aux, gout)
    if kind == "graphconv":
        gpre = _act_vjp_batch(ACT_CODES[layer.activation], aux["pre"], out,
                              gout)
        gz = gpre @ layer.weights.T
        return laplacian.T @ gz
    if kind == "attention":
        gq, gk, gv = _attention_vjp(layer, x, x, x, aux, gout)
        return gq + gk + gv
    raise UnsupportedError(f"unknown layer kind {kind!r}")


def _lstm_input_vjp(layer, x, aux, gout):
    d_in = layer.in_size
    gx = np.zeros_like(x)
    ga = np.asarray(gout, dtype=np.float64)
    gc = np.zeros(layer.hidden)
    for t in range(x.shape[0] - 1, -1, -1):
        s = aux["steps"][t]
        g_out_gate = ga * s["tanh_c"]
        gc = gc + ga * s["out_gate"] * (1.0 - s["tanh_c"] ** 2)
        g_forget = gc * s["c_prev"]
        gc_prev = gc * s["forget"]
        g_signal = gc * s["gate"]
        g_gate = gc * s["signal"]
        gz_signal = g_signal * (1.0 - s["signal"] ** 2)
        gz_gate = g_gate * s["gate"] * (1.0 - s["gate"])
        gz_forget = g_forget * s["forget"] * (1.0 - s["forget"])
        gz_out = g_out_gate * s["out_gate"] * (1.0 - s["out_gate"])
        gu = (K.matvec_transpose(layer.w_signal, gz_signal)
              + K.matvec_transpose(layer.w_gate, gz_gate)
              + K.matvec_transpose(layer.w_forget, gz_forget)
              + K.matvec_transpose(layer.w_output, gz_out))
        gx[t] = gu[:d_in]
        ga = gu[d_in:]
        gc = gc_prev
    return gx


def forward(net: Network, x, laplacian=None) -> ActivationTrace:
    """Run the network on one input, capturing every intermediate
    activation. Pure: identical inputs give bit-identical traces."""
    arr = as_array(x)
    if tuple(arr.shape) != net.input_shape:
        raise ShapeError(
            f"input shape {tuple(arr.shape)} does not match network input "
            f"shape {net.input_shape}"
        )
    lap = None
    if laplacian is not None:
        lap = as_array(laplacian, "laplacian")
        if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
            raise ShapeError(f"laplacian must be square, got {lap.shape}")
    acts = [np.ascontiguousarray(arr)]
    auxes = []
    for i, layer in enumerate(net.layers):
        try:
            out, aux = _layer_forward(layer, acts[-1], lap)
        except (ShapeError, ValidationError) as exc:
            raise type(exc)(f"layer {i} ({layer.kind}): {exc}") from None
        acts.append(out)
        auxes.append(aux)
    return ActivationTrace([Tensor(a) for a in acts], auxes, laplacian=lap)


def backward(net: Network, trace: ActivationTrace, seed):
    """Backpropagate a cotangent on the network output through the trace.

    Returns raw per-activation gradient arrays aligned with
    trace.activations (index 0 is the input gradient).
    """
    seed = as_array(seed, "seed").reshape(net.output_shape)
    acts = [t.array for t in trace.activations]
    grads = [None] * len(acts)
    grads[-1] = seed
    g = seed
    for i in range(net.n_layers - 1, -1, -1):
        g = _layer_input_vjp(net.layers[i], acts[i], acts[i + 1],
                             trace.aux[i], g, trace.laplacian)
        grads[i] = g
    return grads


def gradient(net: Network, x, output_index: int, laplacian=None):
    """Per-layer gradients of output component ``output_index`` with
    respect to every activation, input included (index 0)."""
    if not 0 <= output_index < net.output_size:
        raise ValidationError(
            f"output_index {output_index} out of range for output shape "
            f"{net.output_shape}"
        )
    trace = forward(net, x, laplacian)
    seed = np.zeros(net.output_size)
    seed[output_index] = 1.0
    grads = backward(net, trace, seed.reshape(net.output_shape))
    return [Tensor(g) for g in grads]


def input_gradient(net, x, output_index, laplacian=None) -> np.ndarray:
    return gradient(net, x, output_index, laplacian)[0].array


def predict(net: Network, x, laplacian=None) -> np.ndarray:
    return forward(net, x, laplacian).output.array.copy()


def final_preactivation(net: Network, trace: ActivationTrace) -> np.ndarray:
    """Logits of the final dense layer (its pre-activation vector)."""
    if net.layers[-1].kind != "dense":
        raise UnsupportedError(
            "final pre-activation requires a dense output layer, got "
            f"{net.layers[-1].kind}"
        )
    return trace.aux[-1]["pre"]


def backward_from_final_pre(net: Network, trace: ActivationTrace, seed_pre):
    """Backpropagate a cotangent seeded on the final dense layer's
    pre-activation (used for margin losses on logits)."""
    if net.layers[-1].kind != "dense":
        raise UnsupportedError("requires a dense output layer")
    acts = [t.array for t in trace.activations]
    last = net.layers[-1]
    g = K.matvec_transpose(last.weights,
                           np.ascontiguousarray(as_array(seed_pre)))
    for i in range(net.n_layers - 2, -1, -1):
        g = _layer_input_vjp(net.layers[i], acts[i], acts[i + 1],
                             trace.aux[i], g, trace.laplacian)
    return g


# ---------------------------------------------------------------------------
# standalone layer ops


def attention(layer: Attention, queries, keys, values) -> Tensor:
    """Multi-head scaled dot-product attention on explicit Q/K/V."""
    q = as_array(queries, "queries")
    k = as_array(keys, "keys")
    v = as_array(values, "values")
    squeeze = q.ndim == 1
    q = np.atleast_2d(q)
    k = np.atleast_2d(k)
    v = np.atleast_2d(v)
    for name, m in (("queries", q), ("keys", k), ("values", v)):
        if m.shape[1] != layer.d_model:
            raise ShapeError(
                f"{name} must have width {layer.d_model}, got {m.shape}"
            )
    if k.shape[0] != v.shape[0]:
        raise ShapeError(
            f"keys ({k.shape[0]}) and values ({v.shape[0]}) must agree on "
            "sequence length"
        )
    out, _ = _attention_apply(layer, q, k, v)
    return Tensor(out[0] if squeeze else out)


def lstm_step(cell: LSTMCell, a_prev, c_prev, x_t):
    """One LSTM cell step; gate activations are returned for relevance
    propagation."""
    a_prev = as_array(a_prev, "a_prev")
    c_prev = as_array(c_prev, "c_prev")
    x_t = as_array(x_t, "x_t")
    if a_prev.shape != (cell.hidden,) or c_prev.shape != (cell.hidden,):
        raise ShapeError(
            f"state vectors must have shape ({cell.hidden},), got "
            f"{a_prev.shape} and {c_prev.shape}"
        )
    if x_t.shape != (cell.in_size,):
        raise ShapeError(
            f"x_t must have shape ({cell.in_size},), got {x_t.shape}"
        )
    a, c, aux = _lstm_cell_step(cell, x_t, a_prev, c_prev)
    gates = {
        "signal": Tensor(aux["signal"]),
        "gate": Tensor(aux["gate"]),
        "forget": Tensor(aux["forget"]),
        "out_gate": Tensor(aux["out_gate"]),
        "produce": Tensor(aux["produce"]),
    }
    return Tensor(a), Tensor(c), gates


def graph_conv(layer: GraphConv, laplacian, h_prev) -> Tensor:
    lap = as_array(laplacian, "laplacian")
    h = as_array(h_prev, "h_prev")
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ShapeError(f"laplacian must be square, got {lap.shape}")
    if h.ndim != 2 or h.shape[0] != lap.shape[0]:
        raise ShapeError(
            f"node features {h.shape} do not match laplacian {lap.shape}"
        )
    out, _ = _layer_forward(layer, h, lap)
    return Tensor(out)


# ---------------------------------------------------------------------------
# batched dense-chain paths (training, coalition sweeps)

def _act_batch(code, pre):
    if code == K.ACT_IDENTITY:
        return pre.copy()
    if code == K.ACT_RELU:
        return np.maximum(pre, 0.0)
    if code == K.ACT_SIGMOID:
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        ez = np.exp(pre[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if code == K.ACT_TANH:
        return np.tanh(pre)
    if code == K.ACT_SOFTMAX:
        shifted = pre - pre.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation code {code}")


def _act_vjp_batch(code, pre, out, gout):
    if code == K.ACT_IDENTITY:
        return gout.copy()
    if code == K.ACT_RELU:
        return np.where(pre > 0.0, gout, 0.0)
    if code == K.ACT_SIGMOID:
        return gout * out * (1.0 - out)
    if code == K.ACT_TANH:
        return gout * (1.0 - out * out)
    if code == K.ACT_SOFTMAX:
        dots = (gout * out).sum(axis=-1, keepdims=True)
        return out * (gout - dots)
    raise ValueError(f"unknown activation code {code}")


def forward_batch(net: Network, rows):
    """Row-batched forward pass for all-dense networks.

    Returns (activations, pre_activations); activations[0] is the input
    matrix. Matches the single-instance path to float tolerance.
    """
    if not net.is_dense_chain():
        raise UnsupportedError("forward_batch requires an all-dense network")
    X = as_array(rows, "rows")
    if X.ndim != 2 or X.shape[1] != net.input_shape[0]:
        raise ShapeError(
            f"rows must be (n, {net.input_shape[0]}), got {X.shape}"
        )
    acts = [X]
    pres = []
    for layer in net.layers:
        pre = acts[-1] @ layer.weights.T + layer.bias
        pres.append(pre)
        acts.append(_act_batch(ACT_CODES[layer.activation], pre))
    return acts, pres


def predict_batch(net: Network, rows) -> np.ndarray:
    """Model outputs for a matrix of input rows (batched when possible)."""
    if net.is_dense_chain():
        return forward_batch(net, rows)[0][-1]
    X = as_array(rows, "rows")
    return np.stack([predict(net, r.reshape(net.input_shape)) for r in X])


def backward_batch(net: Network, acts, pres, gout, seed_on_pre=False):
    """Parameter and input gradients for a batched dense-chain pass.

    gout is the per-row cotangent on the network output (or directly on
    the last pre-activation when seed_on_pre is set, which keeps losses
    like cross-entropy stable at saturated outputs); parameter gradients
    are summed over rows in fixed order.
    """
    g = np.asarray(gout, dtype=np.float64)
    param_grads = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        layer = net.layers[i]
        if seed_on_pre and i == net.n_layers - 1:
            gpre = g
        else:
            gpre = _act_vjp_batch(ACT_CODES[layer.activation], pres[i],
                                  acts[i + 1], g)
        param_grads[i] = (gpre.T @ acts[i], gpre.sum(axis=0))
        g = gpre @ layer.weights
    return param_grads, g
