"""Layer-wise relevance propagation across dense, convolutional, pooling,
LSTM and graph-convolution networks.

Rules follow the stabilized family: epsilon adds a sign-following
stabilizer to each linear denominator, gamma favors positive weights via
w + gamma*max(w, 0), and the squared-weight rule redistributes input-layer
relevance by w^2 shares. Bias contributions are absorbed, not
redistributed, so conservation statements apply to zero-bias networks.
LSTM propagation is signal-only: multiplicative gates receive zero
relevance and their product partners inherit everything.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import GraphInstance
from .network import Network, forward, input_gradient, predict
from .tensor import (ShapeError, UnsupportedError, ValidationError, as_array)

ROOT_TOLERANCE = 1e-4
WALK_LIMIT = 1_000_000


@dataclass
class LrpConfig:
    """Rule selection per layer kind plus stabilizer constants.

    ``input_rule='w2'`` overrides the first linear layer with the
    squared-weight rule; pooling layers always redistribute
    proportionally to contributions (winner-takes-all for max pooling).
    """

    rules: dict = field(default_factory=dict)  # kind -> epsilon | gamma
    input_rule: str | None = None              # None | "w2"
    epsilon: float = 1e-6
    gamma: float = 0.25

    def __post_init__(self):
        if self.epsilon < 0 or self.gamma < 0:
            raise ValidationError("epsilon and gamma must be >= 0")
        for kind, rule in self.rules.items():
            if rule not in ("epsilon", "gamma"):
                raise ValidationError(
                    f"rule for {kind!r} must be 'epsilon' or 'gamma', "
                    f"got {rule!r}"
                )
        if self.input_rule not in (None, "w2"):
            raise ValidationError(
                f"input_rule must be None or 'w2', got {self.input_rule!r}"
            )

    def rule_for(self, kind):
        return self.rules.get(kind, "epsilon")


@dataclass
class RelevanceMap:
    """Per-layer relevances aligned with the activation trace; index 0 is
    the input layer (the method's output)."""

    relevances: list
    target_index: int
    config: LrpConfig

    @property
    def input_relevance(self):
        return self.relevances[0]

    def layer_sums(self):
        return [float(np.sum(r)) for r in self.relevances]


@dataclass
class TaylorQuery:
    root: np.ndarray   # near-root reference point, |f(root)| <= tolerance
    x: np.ndarray

    def __post_init__(self):
        self.root = as_array(self.root, "root")
        self.x = as_array(self.x, "x")
        if self.root.shape != self.x.shape:
            raise ShapeError(
                f"root shape {self.root.shape} does not match x "
                f"{self.x.shape}"
            )


@dataclass
class TaylorRelevance:
    relevances: np.ndarray
    residual: float
    root_value: float


@dataclass
class WalkRelevance:
    nodes: tuple
    score: float


def _stab(z, epsilon):
    sign = np.where(z >= 0.0, 1.0, -1.0)
    return z + epsilon * sign


def _safe_ratio(r, denom):
    out = np.zeros_like(r)
    nz = denom != 0.0
    out[nz] = r[nz] / denom[nz]
    return out


def _gamma_weights(w, gamma):
    return w + gamma * np.maximum(w, 0.0)


def taylor_relevance(model, query: TaylorQuery, out: int = 0,
                     root_tolerance: float = ROOT_TOLERANCE):
    """First-order decomposition around a caller-supplied near-root point:
    R_p = df/dx_p(root) * (x_p - root_p), residual reported.

    ``model`` is a Network or any object with value(x) -> float and
    grad(x) -> array (the decomposition only needs a differentiable
    scalar function).
    """
    if isinstance(model, Network):
        def value(p):
            return float(predict(model, p).ravel()[out])

        def grad(p):
            return input_gradient(model, p, out)
    else:
        value, grad = model.value, model.grad
    f_root = value(query.root)
    if abs(f_root) > root_tolerance:
        raise ValidationError(
            f"|f(root)| = {abs(f_root):.3g} exceeds the root tolerance "
            f"{root_tolerance}; supply a point closer to a root"
        )
    relevances = np.asarray(grad(query.root)) * (query.x - query.root)
    residual = value(query.x) - float(relevances.sum())
    return TaylorRelevance(relevances=relevances, residual=residual,
                           root_value=f_root)


# ---------------------------------------------------------------------------
# backward rules per layer kind


def _linear_backward(a_in, weights, bias, r_out, rule, cfg):
    """Relevance through z = W a + b; contributions a_i * w_ji over the
    stabilized denominator. Bias share is absorbed."""
    w = weights
    b = bias
    if rule == "gamma":
        w = _gamma_weights(weights, cfg.gamma)
        b = _gamma_weights(bias, cfg.gamma)
    denom = _stab(w @ a_in + b, cfg.epsilon)
    s = _safe_ratio(r_out, denom)
    return a_in * (w.T @ s)


def _w2_backward(weights, r_out):
    w2 = weights ** 2
    col_sums = w2.sum(axis=1)
    shares = np.zeros_like(w2)
    nz = col_sums != 0.0
    shares[nz] = w2[nz] / col_sums[nz, None]
    return shares.T @ r_out


def _conv_backward(layer, x, r_out, rule, cfg):
    filters = layer.filters
    if rule == "gamma":
        filters = _gamma_weights(filters, cfg.gamma)
    out_c, in_c, kh, kw = filters.shape
    (_, out_h, out_w), pad_h, pad_w = layer.geometry(x.shape)
    _, h, w = x.shape
    s = layer.stride
    # same-padding can be asymmetric: give the bottom/right whatever the
    # last window needs beyond the top/left pad
    pad_b = max((out_h - 1) * s + kh - h - pad_h, 0)
    pad_r = max((out_w - 1) * s + kw - w - pad_w, 0)
    xp = np.zeros((in_c, pad_h + h + pad_b, pad_w + w + pad_r))
    xp[:, pad_h:pad_h + h, pad_w:pad_w + w] = x
    r_in_p = np.zeros_like(xp)
    for oc in range(out_c):
        for i in range(out_h):
            for j in range(out_w):
                patch = xp[:, i * s:i * s + kh, j * s:j * s + kw]
                contrib = filters[oc] * patch
                denom = _stab(np.array([contrib.sum()]), cfg.epsilon)[0]
                if denom != 0.0:
                    r_in_p[:, i * s:i * s + kh, j * s:j * s + kw] += (
                        contrib / denom * r_out[oc, i, j]
                    )
    return r_in_p[:, pad_h:pad_h + h, pad_w:pad_w + w].copy()


def _proportional_shares(values, r_total):
    total = values.sum()
    if total == 0.0:
        return np.full(values.shape, r_total / values.size)
    return values / total * r_total


def _pool_backward(layer, x, aux, r_out):
    kind = layer.kind
    if kind == "maxpool2d":
        r_in = np.zeros(x.size)
        np.add.at(r_in, aux["argmax"].ravel(), r_out.ravel())
        return r_in.reshape(x.shape)
    if kind == "avgpool2d":
        win = layer.window
        c, h, w = x.shape
        r_in = np.zeros_like(x)
        for ci in range(x.shape[0]):
            for i in range(r_out.shape[1]):
                for j in range(r_out.shape[2]):
                    block = x[ci, i * win:(i + 1) * win,
                              j * win:(j + 1) * win]
                    r_in[ci, i * win:(i + 1) * win, j * win:(j + 1) * win] \
                        = _proportional_shares(block, r_out[ci, i, j])
        return r_in
    if kind == "sumpool":
        if x.ndim == 1:
            return _proportional_shares(x, r_out[0])
        r_in = np.zeros_like(x)
        for idx in np.ndindex(*r_out.shape):
            col = x[(slice(None),) + idx]
            r_in[(slice(None),) + idx] = _proportional_shares(
                col, r_out[idx]
            )
        return r_in
    raise UnsupportedError(f"no pooling rule for {kind}")


def _graphconv_backward(layer, x, laplacian, r_out, rule, cfg):
    w = layer.weights
    if rule == "gamma":
        w = _gamma_weights(layer.weights, cfg.gamma)
    denom = _stab(laplacian @ x @ w, cfg.epsilon)
    s = _safe_ratio(r_out, denom)
    return x * (laplacian.T @ s @ w.T)


def _lstm_backward_relevance(layer, aux, r_hidden, cfg):
    """Signal-only relevance through the scanned LSTM steps: gates get
    zero relevance, memory splits proportionally between the carried
    state and the produced signal."""
    steps = aux["steps"]
    seq_len = len(steps)
    d_in = layer.in_size
    r_x = np.zeros((seq_len, d_in))
    r_h = np.asarray(r_hidden, dtype=np.float64).copy()
    r_c = np.zeros(layer.hidden)
    for t in range(seq_len - 1, -1, -1):
        s = steps[t]
        # h_t = out_gate * tanh(c_t): the gate path carries nothing
        r_c = r_c + r_h
        denom = _stab(s["c"], cfg.epsilon)
        carried = s["forget"] * s["c_prev"]
        r_prev_c = _safe_ratio(r_c * carried, denom)
        r_produce = _safe_ratio(r_c * s["produce"], denom)
        # produce = tanh(z_signal) * sigm(z_gate): all to the signal path
        denom_z = _stab(s["u"] @ layer.w_signal.T + layer.b_signal,
                        cfg.epsilon)
        share = _safe_ratio(r_produce, denom_z)
        r_u = s["u"] * (layer.w_signal.T @ share)
        r_x[t] = r_u[:d_in]
        r_h = r_u[d_in:]
        r_c = r_prev_c
    return r_x


def lrp_propagate(net: Network, x, out: int = 0,
                  cfg: LrpConfig | None = None, laplacian=None,
                  seed_relevance=None) -> RelevanceMap:
    """Redistribute the masked target output backward onto every layer.

    The relevance at the output layer is f(x) masked to ``out`` (or the
    caller-supplied seed); each backward rule is linear in the relevance
    it receives.
    """
    cfg = cfg or LrpConfig()
    trace = forward(net, x, laplacian)
    acts = [t.array for t in trace.activations]
    if not 0 <= out < net.output_size:
        raise ValidationError(f"output index {out} out of range")
    r = np.zeros(net.output_size)
    if seed_relevance is None:
        r[out] = acts[-1].ravel()[out]
    else:
        r[out] = float(seed_relevance)
    r = r.reshape(net.output_shape)
    relevances = [None] * len(acts)
    relevances[-1] = r
    first_linear = next(
        (i for i, ly in enumerate(net.layers)
         if ly.kind in ("dense", "conv2d", "graphconv")), None,
    )
    for i in range(net.n_layers - 1, -1, -1):
        layer = net.layers[i]
        kind = layer.kind
        rule = cfg.rule_for(kind)
        use_w2 = cfg.input_rule == "w2" and i == first_linear
        if kind == "dense":
            if use_w2:
                r = _w2_backward(layer.weights, r)
            else:
                r = _linear_backward(acts[i], layer.weights, layer.bias, r,
                                     rule, cfg)
        elif kind == "conv2d":
            if use_w2:
                raise UnsupportedError(
                    "the squared-weight input rule is defined for dense "
                    "input layers"
                )
            r = _conv_backward(layer, acts[i], r, rule, cfg)
        elif kind in ("maxpool2d", "avgpool2d", "sumpool"):
            r = _pool_backward(layer, acts[i], trace.aux[i], r)
        elif kind == "flatten":
            r = r.reshape(acts[i].shape)
        elif kind == "embedding":
            r = r.sum(axis=1)  # per-token relevance
        elif kind == "lstm":
            r = _lstm_backward_relevance(layer, trace.aux[i], r, cfg)
        elif kind == "graphconv":
            r = _graphconv_backward(layer, acts[i], trace.laplacian, r,
                                    rule, cfg)
        elif kind == "attention":
            raise UnsupportedError(
                "relevance propagation through attention layers is not "
                "supported"
            )
        else:
            raise UnsupportedError(f"no relevance rule for {kind}")
        relevances[i] = r
    return RelevanceMap(relevances=relevances, target_index=out, config=cfg)


def check_conservation(rmap: RelevanceMap) -> dict:
    """Adjacent layer sums, their max deviation, and the minimum input
    relevance (the positivity witness for the squared-weight rule)."""
    sums = rmap.layer_sums()
    deviations = [abs(a - b) for a, b in zip(sums, sums[1:])]
    return {
        "layer_sums": sums,
        "max_deviation": max(deviations) if deviations else 0.0,
        "min_input_relevance": float(np.min(rmap.relevances[0])),
    }


def lstm_lrp(net: Network, tokens, out: int = 0,
             cfg: LrpConfig | None = None) -> np.ndarray:
    """Per-token relevances for a sequence net (optional embedding, an
    LSTM layer, dense readout); the token axis is the first input axis."""
    tokens = as_array(tokens, "tokens")
    if tokens.shape[0] == 0:
        raise ValidationError("token sequence must be non-empty")
    if not net.has_kind("lstm"):
        raise ValidationError("lstm_lrp expects a network with an LSTM "
                              "layer")
    rmap = lrp_propagate(net, tokens, out, cfg)
    r_in = rmap.input_relevance
    if r_in.ndim == 1:
        return r_in
    return r_in.sum(axis=tuple(range(1, r_in.ndim)))


# ---------------------------------------------------------------------------
# walk relevances for graph networks


def _validate_gnn(net):
    if net.layers[-1].kind != "sumpool":
        raise ValidationError("graph walk relevance expects a sum-pool "
                              "readout")
    convs = net.layers[:-1]
    if not convs or any(ly.kind != "graphconv" for ly in convs):
        raise ValidationError(
            "graph walk relevance expects graph-convolution layers only"
        )
    for ly in convs:
        if ly.activation != "relu":
            raise ValidationError("graph-convolution layers must use relu")
    return convs


def count_walks(adjacency_mask, depth) -> int:
    """Number of node sequences of ``depth`` hops consistent with the
    nonzero pattern (independent path-counting oracle uses powers)."""
    b = (np.asarray(adjacency_mask) != 0.0).astype(np.int64)
    counts = np.ones(b.shape[0], dtype=np.int64)
    for _ in range(depth):
        counts = b @ counts
    return int(counts.sum())


def gnn_lrp(net: Network, graph: GraphInstance, out: int = 0,
            gamma: float = 0.0, epsilon: float = 0.0):
    """Relevance of every connectivity-consistent walk through the graph
    layers; at gamma = 0 the walk scores sum to the masked output on
    positive-activation nets."""
    convs = _validate_gnn(net)
    lap = graph.laplacian
    n = graph.n_nodes
    depth = len(convs)
    if count_walks(lap, depth) > WALK_LIMIT:
        raise UnsupportedError(
            f"walk enumeration exceeds {WALK_LIMIT}; reduce the graph "
            "size or network depth"
        )
    trace = forward(net, graph.features, laplacian=lap)
    h_layers = [t.array for t in trace.activations[:depth + 1]]
    readout = trace.activations[-1].array
    if not 0 <= out < readout.size:
        raise ValidationError(f"output index {out} out of range")
    cfg = LrpConfig(epsilon=epsilon, gamma=gamma)
    rhos = [_gamma_weights(ly.weights, gamma) for ly in convs]
    denoms = [_stab(lap @ h_layers[t] @ rhos[t], epsilon)
              for t in range(depth)]
    neighbors = [np.flatnonzero(lap[v] != 0.0) for v in range(n)]
    walks = []

    def descend(t, node, r_vec, path):
        if t == 0:
            walks.append(WalkRelevance(nodes=tuple(reversed(path)),
                                       score=float(r_vec.sum())))
            return
        s = _safe_ratio(r_vec, denoms[t - 1][node])
        base = rhos[t - 1] @ s
        for prev in neighbors[node]:
            r_prev = h_layers[t - 1][prev] * (lap[node, prev] * base)
            descend(t - 1, prev, r_prev, path + [int(prev)])

    for end in range(n):
        r_end = np.zeros(readout.size)
        r_end[out] = h_layers[depth][end, out]
        descend(depth, end, r_end, [int(end)])
    return walks


def marginalize_walks(walks, n_nodes: int) -> np.ndarray:
    """Node relevance vector: walk scores summed over the first node."""
    node_rel = np.zeros(n_nodes)
    for walk in walks:
        node_rel[walk.nodes[0]] += walk.score
    return node_rel


# ---------------------------------------------------------------------------
# perturbation analysis


def perturbation_curve(net: Network, x, relevances, n_remove: int,
                       neutral, out: int = 0) -> np.ndarray:
    """Model scores after removing the 0..n most relevant elements.

    Removal replaces an element with its neutral counterpart (a zero /
    padding token id for sequences, the background mean for tabular
    rows). Ordering is by descending relevance, ties to the lowest index.
    """
    x = as_array(x, "x")
    relevances = as_array(relevances, "relevances")
    n_elements = x.shape[0]
    if relevances.shape != (n_elements,):
        raise ShapeError(
            f"need one relevance per input element, got "
            f"{relevances.shape} for {n_elements} elements"
        )
    if not 0 <= n_remove <= n_elements:
        raise ValidationError(
            f"n_remove must be in [0, {n_elements}], got {n_remove}"
        )
    neutral = as_array(neutral, "neutral")
    if neutral.ndim == 0:
        neutral = np.full(x.shape, float(neutral))
    if neutral.shape != x.shape:
        raise ShapeError(
            f"neutral shape {neutral.shape} does not match input "
            f"{x.shape}"
        )
    order = sorted(range(n_elements),
                   key=lambda i: (-relevances[i], i))[:n_remove]
    scores = [float(predict(net, x).ravel()[out])]
    current = x.copy()
    for idx in order:
        current[idx] = neutral[idx]
        scores.append(float(predict(net, current).ravel()[out]))
    return np.asarray(scores)


# ---------------------------------------------------------------------------
# exports


def relevance_map_csv(rmap: RelevanceMap, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "flat_index", "relevance"])
        for layer_idx, r in enumerate(rmap.relevances):
            for flat_idx, value in enumerate(np.asarray(r).ravel()):
                writer.writerow([layer_idx, flat_idx, repr(float(value))])


def walks_csv(walks, path: str) -> None:
    ordered = sorted(walks, key=lambda w: (-abs(w.score), w.nodes))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["walk", "relevance"])
        for walk in ordered:
            writer.writerow(["-".join(str(v) for v in walk.nodes),
                             repr(walk.score)])
