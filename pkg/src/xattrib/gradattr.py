"""Gradient-based attribution: class activation heatmaps and integrated
gradients with axiom checking.

The heatmap pipeline pools the class-score gradients over each channel of
the chosen convolutional layer, forms the relu'd weighted activation
combination and min-max normalizes it (an all-constant map degenerates to
zeros). Integrated gradients uses a right-Riemann path sum and reports
its own completeness gap rather than hiding the discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, backward, forward, gradient, predict
from .tensor import ShapeError, ValidationError, as_array


@dataclass
class Heatmap:
    grid: np.ndarray          # (h, w), values in [0, 1], pre-upsampling
    layer_index: int
    target_class: int


@dataclass
class IgResult:
    baseline: np.ndarray
    attributions: np.ndarray
    steps: int
    delta: float              # f(x) - f(baseline)
    completeness_gap: float   # |sum(attr) - delta|


def _conv_activation_and_grad(net, image, target_class):
    if net.last_conv_index is None:
        raise ValidationError(
            "network has no last_conv_index configured; set it to the "
            "convolutional layer the heatmap should explain"
        )
    grads = gradient(net, image, target_class)
    trace = forward(net, image)
    # layer i's output sits at trace index i + 1
    act = trace.activations[net.last_conv_index + 1].array
    grad = grads[net.last_conv_index + 1].array
    return act, grad


def neuron_importance(net: Network, image, target_class: int) -> np.ndarray:
    """Per-channel weights: gradients of the class score pooled over the
    spatial cells of the chosen conv layer (1/Z sum over i, j)."""
    _, grad = _conv_activation_and_grad(net, image, target_class)
    return grad.mean(axis=(1, 2))


def gradcam(net: Network, image, target_class: int) -> Heatmap:
    """relu of the importance-weighted activation combination, min-max
    normalized to [0, 1]; constant maps normalize to all zeros."""
    act, grad = _conv_activation_and_grad(net, image, target_class)
    alpha = grad.mean(axis=(1, 2))
    combined = np.maximum(np.tensordot(alpha, act, axes=(0, 0)), 0.0)
    lo, hi = combined.min(), combined.max()
    if hi - lo < 1e-300:
        grid = np.zeros_like(combined)
    else:
        grid = (combined - lo) / (hi - lo)
    return Heatmap(grid=grid, layer_index=net.last_conv_index,
                   target_class=target_class)


def bilinear_upsample(grid, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear interpolation of a 2-D grid."""
    grid = as_array(grid, "grid")
    in_h, in_w = grid.shape
    ys = (np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1
          else np.zeros(out_h))
    xs = (np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1
          else np.zeros(out_w))
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bottom = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def integrated_gradients(net: Network, x, baseline=None, out: int = 0,
                         steps: int = 64) -> IgResult:
    """Displacement times the path-averaged gradient from the baseline to
    the input, right-Riemann discretized at ``steps`` points."""
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    x = as_array(x, "x").reshape(net.input_shape)
    if baseline is None:
        baseline = np.zeros(net.input_shape)
    baseline = as_array(baseline, "baseline")
    if baseline.shape != x.shape:
        raise ShapeError(
            f"baseline shape {baseline.shape} does not match input "
            f"{x.shape}"
        )
    displacement = x - baseline
    total = np.zeros_like(x)
    seed = np.zeros(net.output_size)
    seed[out] = 1.0
    seed = seed.reshape(net.output_shape)
    for t in range(1, steps + 1):
        point = baseline + (t / steps) * displacement
        trace = forward(net, point)
        total += backward(net, trace, seed)[0]
    attributions = displacement * total / steps
    delta = float(predict(net, x).ravel()[out]
                  - predict(net, baseline).ravel()[out])
    gap = abs(float(attributions.sum()) - delta)
    return IgResult(baseline=baseline, attributions=attributions,
                    steps=steps, delta=delta, completeness_gap=gap)


def check_axioms(net_a: Network, net_b: Network, x, baseline, out: int = 0,
                 steps: int = 256, invariance_tol: float = 1e-6) -> dict:
    """Sensitivity and implementation-invariance report for a pair of
    functionally identical networks.

    Sensitivity applies when exactly one input component differs between
    x and baseline and the outputs differ; that component must then carry
    non-zero attribution. Invariance compares the two networks'
    attribution vectors on the same path.
    """
    if net_a.input_shape != net_b.input_shape:
        raise ShapeError(
            f"networks disagree on input shape: {net_a.input_shape} vs "
            f"{net_b.input_shape}"
        )
    x = as_array(x, "x").reshape(net_a.input_shape)
    baseline = as_array(baseline, "baseline").reshape(net_a.input_shape)
    ig_a = integrated_gradients(net_a, x, baseline, out, steps)
    ig_b = integrated_gradients(net_b, x, baseline, out, steps)
    changed = np.flatnonzero(x.ravel() != baseline.ravel())
    f_differs = abs(ig_a.delta) > 0.0
    report = {
        "sensitivity_applicable": len(changed) == 1 and f_differs,
        "sensitivity_holds": None,
        "changed_feature": int(changed[0]) if len(changed) == 1 else None,
        "invariance_max_gap": float(
            np.max(np.abs(ig_a.attributions - ig_b.attributions))
        ),
        "attributions_a": ig_a.attributions,
        "attributions_b": ig_b.attributions,
    }
    if report["sensitivity_applicable"]:
        report["sensitivity_holds"] = bool(
            abs(ig_a.attributions.ravel()[changed[0]]) > 0.0
        )
    report["invariance_holds"] = (
        report["invariance_max_gap"] <= invariance_tol
    )
    return report
