"""Network builders, plain-text model serialization and a small trainer.

The model file is human-diffable UTF-8 text with ``[meta]`` and
``[layer k]`` sections; weights are written as plain decimals with 17
significant digits, which round-trips float64 bit-exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .layers import (ACTIVATIONS, Attention, AvgPool2D, Conv2D, Dense,
                     Embedding, Flatten, GraphConv, LSTMCell, MaxPool2D,
                     SumPool)
from .network import Network, backward_batch, forward_batch, predict_batch
from .tensor import ValidationError

FORMAT_VERSION = 1


def mlp(sizes, activations=None, seed=0, scale=None) -> Network:
    """Random dense stack; Xavier-style init, deterministic per seed."""
    if len(sizes) < 2:
        raise ValidationError("mlp needs at least input and output size")
    if activations is None:
        activations = ["tanh"] * (len(sizes) - 2) + ["sigmoid"]
    if len(activations) != len(sizes) - 1:
        raise ValidationError(
            f"{len(sizes) - 1} layers but {len(activations)} activations"
        )
    rng = np.random.default_rng(seed)
    layers = []
    for (n_in, n_out), act in zip(zip(sizes, sizes[1:]), activations):
        sd = scale if scale is not None else math.sqrt(2.0 / (n_in + n_out))
        layers.append(Dense(rng.normal(0.0, sd, size=(n_out, n_in)),
                            np.zeros(n_out), act))
    return Network(layers, input_shape=(sizes[0],))


def logistic(weights, intercept=0.0, feature_names=None) -> Network:
    """Single sigmoid unit p = sigma(w . x + b)."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    return Network([Dense(w, [float(intercept)], "sigmoid")],
                   input_shape=(w.shape[1],), feature_names=feature_names)


def standardizer_layer(rows) -> Dense:
    """Identity-activation dense layer computing (x - mean) / std per
    column, so nets keep consuming raw feature units while training on
    well-conditioned values."""
    rows = np.asarray(rows, dtype=np.float64)
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Dense(np.diag(1.0 / std), -mean / std, "identity")


def tabular_classifier(rows, hidden=(), seed=0) -> Network:
    """Standardizer followed by a dense stack ending in one sigmoid unit."""
    rows = np.asarray(rows, dtype=np.float64)
    n_in = rows.shape[1]
    rng = np.random.default_rng(seed)
    layers = [standardizer_layer(rows)]
    sizes = [n_in, *hidden, 1]
    acts = ["tanh"] * len(hidden) + ["sigmoid"]
    for (a, b), act in zip(zip(sizes, sizes[1:]), acts):
        sd = math.sqrt(2.0 / (a + b))
        layers.append(Dense(rng.normal(0.0, sd, size=(b, a)), np.zeros(b),
                            act))
    return Network(layers, input_shape=(n_in,))


def rebuild_dense(net: Network, params) -> Network:
    """Fresh network with the same dense architecture but new parameters."""
    layers = [Dense(w, b, layer.activation)
              for layer, (w, b) in zip(net.layers, params)]
    return Network(layers, input_shape=net.input_shape,
                   feature_names=net.feature_names,
                   class_names=net.class_names)


def dense_params(net: Network):
    return [(layer.weights.copy(), layer.bias.copy())
            for layer in net.layers]


def train_classifier(net: Network, rows, labels, epochs=200, lr=0.5,
                     freeze=()):
    """Full-batch gradient descent on binary cross-entropy.

    Requires an all-dense net ending in a single sigmoid unit; layer
    indices in ``freeze`` (e.g. a leading standardizer) keep their
    parameters. Returns (trained network, per-epoch loss history).
    Deterministic.
    """
    if not net.is_dense_chain():
        raise ValidationError("trainer requires an all-dense network")
    last = net.layers[-1]
    if last.activation != "sigmoid" or last.out_size != 1:
        raise ValidationError(
            "trainer requires a single sigmoid output unit"
        )
    frozen = set(freeze)
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    n = X.shape[0]
    current = net
    history = []
    eps = 1e-12
    for _ in range(epochs):
        acts, pres = forward_batch(current, X)
        p = acts[-1]
        loss = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
        history.append(float(loss))
        # d loss / d pre = (p - y) / n: seed the pre-activation directly so
        # saturated probabilities cannot produce 0/0
        grads, _ = backward_batch(current, acts, pres, (p - y) / n,
                                  seed_on_pre=True)
        params = [
            (layer.weights, layer.bias) if i in frozen
            else (layer.weights - lr * gw, layer.bias - lr * gb)
            for i, (layer, (gw, gb)) in enumerate(zip(current.layers, grads))
        ]
        current = rebuild_dense(current, params)
    return current, history


def accuracy(net: Network, rows, labels) -> float:
    out = predict_batch(net, rows)
    y = np.asarray(labels, dtype=np.float64)
    if out.shape[1] == 1:
        pred = (out[:, 0] >= 0.5).astype(np.float64)
    else:
        pred = np.argmax(out, axis=1).astype(np.float64)
    return float(np.mean(pred == y))


# ---------------------------------------------------------------------------
# text serialization


def _fmt(values) -> str:
    flat = np.asarray(values, dtype=np.float64).ravel()
    return " ".join(f"{v:.17g}" for v in flat)


def _param_lines(name, arr, out):
    arr = np.asarray(arr)
    out.append(f"param {name}: {' '.join(str(d) for d in arr.shape)}")
    if arr.ndim <= 1:
        out.append(_fmt(arr))
    else:
        for row in arr.reshape(arr.shape[0], -1):
            out.append(_fmt(row))


def save_model(net: Network, path: str) -> None:
    lines = ["[meta]", f"format_version: {FORMAT_VERSION}",
             f"input_shape: {' '.join(str(d) for d in net.input_shape)}",
             f"layer_count: {net.n_layers}"]
    if net.last_conv_index is not None:
        lines.append(f"last_conv_index: {net.last_conv_index}")
    if net.feature_names:
        lines.append(f"feature_names: {','.join(net.feature_names)}")
    if net.class_names:
        lines.append(f"class_names: {','.join(net.class_names)}")
    for i, layer in enumerate(net.layers):
        lines.append("")
        lines.append(f"[layer {i}]")
        lines.append(f"kind: {layer.kind}")
        if layer.kind == "dense":
            lines.append(f"activation: {layer.activation}")
            _param_lines("weights", layer.weights, lines)
            _param_lines("bias", layer.bias, lines)
        elif layer.kind == "conv2d":
            lines.append(f"stride: {layer.stride}")
            lines.append(f"padding: {layer.padding}")
            _param_lines("filters", layer.filters, lines)
        elif layer.kind in ("maxpool2d", "avgpool2d"):
            lines.append(f"window: {layer.window}")
        elif layer.kind in ("sumpool", "flatten"):
            pass
        elif layer.kind == "lstm":
            for name in ("w_signal", "w_gate", "w_forget", "w_output",
                         "b_signal", "b_gate", "b_forget", "b_output"):
                _param_lines(name, getattr(layer, name), lines)
        elif layer.kind == "graphconv":
            lines.append(f"activation: {layer.activation}")
            _param_lines("weights", layer.weights, lines)
        elif layer.kind == "attention":
            for name in ("w_query", "w_key", "w_value", "w_out"):
                _param_lines(name, getattr(layer, name), lines)
        elif layer.kind == "embedding":
            _param_lines("table", layer.table, lines)
        else:
            raise ValidationError(f"cannot serialize layer kind {layer.kind}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.path = path
        self.pos = 0

    def error(self, msg):
        raise ValidationError(f"{self.path}:{self.pos}: {msg}")

    def next_line(self):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        return None

    def peek(self):
        p = self.pos
        line = self.next_line()
        self.pos = p
        return line


def _read_kv(reader, section):
    """Key/value lines of one section; 'param' keys keep their value
    tokens as raw floats."""
    fields = {}
    params = {}
    while True:
        line = reader.peek()
        if line is None or line.startswith("["):
            return fields, params
        reader.next_line()
        if ":" not in line:
            reader.error(f"expected 'key: value' in section {section}, "
                         f"got {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key.startswith("param "):
            name = key[len("param "):].strip()
            try:
                shape = tuple(int(t) for t in value.split())
            except ValueError:
                reader.error(f"param {name}: bad shape spec {value!r}")
            count = math.prod(shape) if shape else 0
            tokens = []
            while len(tokens) < count:
                data_line = reader.next_line()
                if data_line is None or data_line.startswith("["):
                    reader.error(
                        f"param {name}: expected {count} values, file "
                        f"ended after {len(tokens)}"
                    )
                tokens.extend(data_line.split())
            if len(tokens) != count:
                reader.error(
                    f"param {name}: expected {count} values, got "
                    f"{len(tokens)}"
                )
            try:
                arr = np.array([float(t) for t in tokens]).reshape(shape)
            except ValueError:
                reader.error(f"param {name}: non-numeric value")
            params[name] = arr
        else:
            fields[key] = value


def _need(fields, key, reader, section):
    if key not in fields:
        reader.error(f"section {section} is missing field {key!r}")
    return fields[key]


def _need_param(params, key, reader, section):
    if key not in params:
        reader.error(f"section {section} is missing param {key!r}")
    return params[key]


def load_model(path: str) -> Network:
    reader = _Reader(path)
    header = reader.next_line()
    if header != "[meta]":
        reader.error(f"expected [meta] section first, got {header!r}")
    meta, _ = _read_kv(reader, "[meta]")
    version = _need(meta, "format_version", reader, "[meta]")
    if version != str(FORMAT_VERSION):
        reader.error(
            f"unsupported format_version {version!r} (this build reads "
            f"{FORMAT_VERSION})"
        )
    input_shape = tuple(
        int(t) for t in _need(meta, "input_shape", reader, "[meta]").split()
    )
    layer_count = int(_need(meta, "layer_count", reader, "[meta]"))
    layers = []
    for i in range(layer_count):
        section = f"[layer {i}]"
        line = reader.next_line()
        if line != section:
            reader.error(f"expected section {section}, got {line!r}")
        fields, params = _read_kv(reader, section)
        kind = _need(fields, "kind", reader, section)
        try:
            layers.append(_build_layer(kind, fields, params, reader, section))
        except (ValidationError, Exception) as exc:
            if isinstance(exc, ValidationError) and str(exc).startswith(path):
                raise
            raise ValidationError(f"{path}: {section}: {exc}") from None
    extra = reader.next_line()
    if extra is not None:
        reader.error(f"unexpected trailing content {extra!r}")
    kwargs = {}
    if "last_conv_index" in meta:
        kwargs["last_conv_index"] = int(meta["last_conv_index"])
    if "feature_names" in meta:
        kwargs["feature_names"] = meta["feature_names"].split(",")
    if "class_names" in meta:
        kwargs["class_names"] = meta["class_names"].split(",")
    return Network(layers, input_shape=input_shape, **kwargs)


def _build_layer(kind, fields, params, reader, section):
    if kind == "dense":
        act = fields.get("activation", "identity")
        if act not in ACTIVATIONS:
            reader.error(f"unknown activation {act!r}")
        return Dense(_need_param(params, "weights", reader, section),
                     _need_param(params, "bias", reader, section), act)
    if kind == "conv2d":
        return Conv2D(_need_param(params, "filters", reader, section),
                      stride=int(fields.get("stride", 1)),
                      padding=fields.get("padding", "valid"))
    if kind == "maxpool2d":
        return MaxPool2D(int(_need(fields, "window", reader, section)))
    if kind == "avgpool2d":
        return AvgPool2D(int(_need(fields, "window", reader, section)))
    if kind == "sumpool":
        return SumPool()
    if kind == "flatten":
        return Flatten()
    if kind == "lstm":
        names = ("w_signal", "w_gate", "w_forget", "w_output",
                 "b_signal", "b_gate", "b_forget", "b_output")
        return LSTMCell(*[_need_param(params, n, reader, section)
                          for n in names])
    if kind == "graphconv":
        act = fields.get("activation", "relu")
        return GraphConv(_need_param(params, "weights", reader, section), act)
    if kind == "attention":
        names = ("w_query", "w_key", "w_value", "w_out")
        return Attention(*[_need_param(params, n, reader, section)
                           for n in names])
    if kind == "embedding":
        return Embedding(_need_param(params, "table", reader, section))
    reader.error(f"unknown layer kind {kind!r}")
