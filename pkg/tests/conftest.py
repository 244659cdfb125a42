"""Shared oracles and random model factories for the test suite."""

import numpy as np
import pytest

from xattrib import (Attention, AvgPool2D, Conv2D, Dense, Flatten, GraphConv,
                     LSTMCell, MaxPool2D, Network, SumPool)
from xattrib.network import forward, predict


def fd_input_gradient(net, x, out_index, step=1e-5, laplacian=None):
    """Central finite differences of one output component w.r.t. the
    input; the independent oracle for every analytic gradient."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    g = np.zeros_like(flat)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        fp = predict(net, xp.reshape(x.shape), laplacian).ravel()[out_index]
        fm = predict(net, xm.reshape(x.shape), laplacian).ravel()[out_index]
        g[i] = (fp - fm) / (2.0 * step)
    return g.reshape(x.shape)


def max_rel_error(analytic, numeric, floor=1e-6):
    """Max relative disagreement over components with |gradient| above
    the floor (tiny components drown in finite-difference noise)."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    mask = (np.abs(a) > floor) | (np.abs(n) > floor)
    if not mask.any():
        return 0.0
    denom = np.maximum(np.abs(a[mask]), np.abs(n[mask]))
    return float(np.max(np.abs(a[mask] - n[mask]) / denom))


def kink_safe(net, x, margin=1e-3, laplacian=None):
    """True when no relu pre-activation or maxpool margin sits within
    ``margin`` of a non-differentiable point, so the finite-difference
    oracle is valid at x."""
    trace = forward(net, x, laplacian)
    for layer, aux, act_in in zip(net.layers, trace.aux,
                                  trace.activations[:-1]):
        if layer.kind == "dense" and layer.activation == "relu":
            if np.min(np.abs(aux["pre"])) < margin:
                return False
        if layer.kind == "graphconv" and layer.activation == "relu":
            if np.min(np.abs(aux["pre"])) < margin:
                return False
        if layer.kind == "maxpool2d":
            arr = act_in.array
            c, h, w = arr.shape
            win = layer.window
            for ci in range(c):
                for i in range(h // win):
                    for j in range(w // win):
                        block = arr[ci, i * win:(i + 1) * win,
                                    j * win:(j + 1) * win].ravel()
                        if block.size > 1:
                            top2 = np.sort(block)[-2:]
                            if top2[1] - top2[0] < margin:
                                return False
    return True


def draw_input(rng, net, margin=1e-3, laplacian=None, tries=50):
    """Random input resampled until it is finite-difference safe."""
    for _ in range(tries):
        x = rng.normal(0.0, 1.0, size=net.input_shape)
        if kink_safe(net, x, margin, laplacian):
            return x
    raise AssertionError("could not draw a kink-safe input")


# --------------------------------------------------------------------------
# random model factories, one per layer-kind family


def make_dense_net(rng, activations=None):
    sizes = [int(rng.integers(2, 6)) for _ in range(3)] + [2]
    if activations is None:
        pool = ["relu", "sigmoid", "tanh", "identity"]
        activations = [pool[int(rng.integers(len(pool)))]
                       for _ in range(len(sizes) - 2)]
        activations.append("softmax" if rng.random() < 0.5 else "sigmoid")
    layers = [Dense(rng.normal(0, 0.8, (o, i)), rng.normal(0, 0.3, o), act)
              for (i, o), act in zip(zip(sizes, sizes[1:]), activations)]
    return Network(layers, input_shape=(sizes[0],))


def make_conv_net(rng, pool=None):
    c, h, w = 2, 6, 6
    layers = [Conv2D(rng.normal(0, 0.5, (3, c, 3, 3)), stride=1,
                     padding="same")]
    if pool == "max":
        layers.append(MaxPool2D(2))
    elif pool == "avg":
        layers.append(AvgPool2D(2))
    layers.append(Conv2D(rng.normal(0, 0.5, (2, 3, 2, 2)), stride=1,
                         padding="valid"))
    layers.append(Flatten())
    flat = Network(layers, input_shape=(c, h, w)).output_shape[0]
    layers.append(Dense(rng.normal(0, 0.4, (2, flat)), rng.normal(0, 0.2, 2),
                        "sigmoid"))
    return Network(layers, input_shape=(c, h, w))


def make_sumpool_net(rng, n_in=4, n_hidden=5):
    return Network(
        [Dense(rng.normal(0, 0.8, (n_hidden, n_in)), np.zeros(n_hidden),
               "relu"),
         SumPool()],
        input_shape=(n_in,),
    )


def make_lstm_net(rng, seq=4, d_in=3, hidden=4):
    cell = LSTMCell(*[rng.normal(0, 0.6, (hidden, d_in + hidden))
                      for _ in range(4)],
                    *[rng.normal(0, 0.2, hidden) for _ in range(4)])
    head = Dense(rng.normal(0, 0.6, (2, hidden)), rng.normal(0, 0.2, 2),
                 "sigmoid")
    return Network([cell, head], input_shape=(seq, d_in))


def make_attention_net(rng, seq=3, d_model=4, heads=2, dk=3, dv=2):
    att = Attention(rng.normal(0, 0.6, (heads, d_model, dk)),
                    rng.normal(0, 0.6, (heads, d_model, dk)),
                    rng.normal(0, 0.6, (heads, d_model, dv)),
                    rng.normal(0, 0.6, (heads * dv, d_model)))
    head = Dense(rng.normal(0, 0.4, (2, seq * d_model)), np.zeros(2),
                 "sigmoid")
    return Network([att, Flatten(), head], input_shape=(seq, d_model))


def make_graph_net(rng, n_nodes=4, d_in=2, d_hidden=3, depth=2):
    widths = [d_in] + [d_hidden] * (depth - 1) + [2]
    layers = [GraphConv(rng.normal(0, 0.7, (i, o)), "relu")
              for i, o in zip(widths, widths[1:])]
    layers.append(SumPool())
    return Network(layers, input_shape=(n_nodes, d_in))


def parallel_sum_net(net_f, net_g, out_weights=(1.0, 1.0)):
    """Block-diagonal composition computing a*f(x) + b*g(x) for two
    all-dense single-output nets over the same input (used by the
    model-linearity checks)."""
    assert net_f.input_shape == net_g.input_shape
    assert net_f.is_dense_chain() and net_g.is_dense_chain()
    assert len(net_f.layers) == len(net_g.layers)
    layers = []
    n_in = net_f.input_shape[0]
    first_f, first_g = net_f.layers[0], net_g.layers[0]
    layers.append(Dense(
        np.vstack([first_f.weights, first_g.weights]),
        np.concatenate([first_f.bias, first_g.bias]),
        first_f.activation,
    ))
    assert first_f.activation == first_g.activation
    for lf, lg in zip(net_f.layers[1:], net_g.layers[1:]):
        assert lf.activation == lg.activation
        of, inf_ = lf.weights.shape
        og, ing = lg.weights.shape
        w = np.zeros((of + og, inf_ + ing))
        w[:of, :inf_] = lf.weights
        w[of:, inf_:] = lg.weights
        layers.append(Dense(w, np.concatenate([lf.bias, lg.bias]),
                            lf.activation))
    a, b = out_weights
    layers.append(Dense(np.array([[a, b]]), np.zeros(1), "identity"))
    return Network(layers, input_shape=(n_in,))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
