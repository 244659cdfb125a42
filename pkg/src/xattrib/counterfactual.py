"""Diverse counterfactual search by projected gradient descent.

The combined objective trades off reaching the desired class (hinge on
the logit margin), staying close to the original row (range-scaled mean
L1 distance) and mutual diversity of the candidate set (determinant of a
distance kernel). Candidates are optimized jointly because the diversity
term couples them; immutable features are frozen and every step projects
back into the per-feature valid ranges.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import (Network, backward_batch, backward_from_final_pre,
                      final_preactivation, forward, forward_batch)
from .tensor import ShapeError, ValidationError, as_array

log = logging.getLogger(__name__)

STALL_IMPROVEMENT = 1e-7
STALL_WINDOW = 50


@dataclass
class CfQuery:
    x: np.ndarray
    desired_class: int
    k: int = 3
    lambda1: float = 0.5
    lambda2: float = 1.0
    immutable: tuple = ()
    ranges: np.ndarray = None          # (M, 2) per-feature lo/hi
    integer_features: tuple = ()
    learning_rate: float = 0.05
    max_iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.x = as_array(self.x, "x")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError("lambda1 and lambda2 must be >= 0")
        m = self.x.shape[0]
        if self.ranges is None:
            raise ValidationError("per-feature ranges are required")
        self.ranges = as_array(self.ranges, "ranges")
        if self.ranges.shape != (m, 2):
            raise ShapeError(
                f"ranges must be ({m}, 2), got {self.ranges.shape}"
            )
        if np.any(self.ranges[:, 1] <= self.ranges[:, 0]):
            raise ValidationError("each range needs hi > lo")
        self.immutable = tuple(sorted(set(int(i) for i in self.immutable)))
        self.integer_features = tuple(
            sorted(set(int(i) for i in self.integer_features))
        )
        for idx in self.immutable:
            lo, hi = self.ranges[idx]
            if not lo <= self.x[idx] <= hi:
                raise ValidationError(
                    f"immutable feature {idx} value {self.x[idx]} outside "
                    f"its range [{lo}, {hi}]"
                )

    @property
    def scales(self):
        return self.ranges[:, 1] - self.ranges[:, 0]


@dataclass
class CfSet:
    x: np.ndarray
    candidates: np.ndarray      # (k, M)
    outputs: np.ndarray         # desired-class probability per candidate
    valid: np.ndarray           # bool per candidate
    yloss: float
    proximity: float
    diversity: float
    loss: float
    iterations: int
    metadata: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "schema": 1,
            "kind": "counterfactuals",
            "x": [float(v) for v in self.x],
            "candidates": [[float(v) for v in row]
                           for row in self.candidates],
            "outputs": [float(v) for v in self.outputs],
            "valid": [bool(v) for v in self.valid],
            "loss_decomposition": {
                "yloss": self.yloss,
                "proximity": self.proximity,
                "diversity": self.diversity,
                "total": self.loss,
            },
            "iterations": self.iterations,
            "metadata": self.metadata,
        }


def distance(a, b, scales) -> float:
    """Range-scaled mean L1 distance."""
    a = as_array(a, "a")
    b = as_array(b, "b")
    scales = as_array(scales, "scales")
    if np.any(scales <= 0.0):
        raise ValidationError("scales must be strictly positive")
    if a.shape != b.shape or a.shape != scales.shape:
        raise ShapeError(
            f"rows and scales must align: {a.shape}, {b.shape}, "
            f"{scales.shape}"
        )
    return float(np.mean(np.abs(a - b) / scales))


def proximity(candidates, x, scales) -> float:
    """Negative mean distance of the candidates to the original row."""
    candidates = np.atleast_2d(as_array(candidates, "candidates"))
    return -float(np.mean([distance(c, x, scales) for c in candidates]))


def _pairwise_distances(candidates, scales):
    scaled = candidates / scales
    return np.abs(scaled[:, None, :] - scaled[None, :, :]).mean(axis=2)


def kernel_matrix(candidates, scales) -> np.ndarray:
    candidates = np.atleast_2d(as_array(candidates, "candidates"))
    scales = as_array(scales, "scales")
    if np.any(scales <= 0.0):
        raise ValidationError("scales must be strictly positive")
    return 1.0 / (1.0 + _pairwise_distances(candidates, scales))


def dpp_diversity(candidates, scales) -> float:
    """det of the 1/(1+dist) kernel; LU with partial pivoting underneath."""
    return float(np.linalg.det(kernel_matrix(candidates, scales)))


def _margin_and_gradients(net, candidates, desired):
    """Desired-class logit margin, its input gradient, and the
    desired-class probability for each candidate (batched over the
    candidate set for dense chains)."""
    k = candidates.shape[0]
    if net.is_dense_chain():
        acts, pres = forward_batch(net, candidates)
        logits = pres[-1]
        out = acts[-1]
        if logits.shape[1] == 1:
            sign = 1.0 if desired == 1 else -1.0
            margins = sign * logits[:, 0]
            probs = out[:, 0] if desired == 1 else 1.0 - out[:, 0]
            seeds = np.full((k, 1), sign)
        else:
            others = np.delete(np.arange(logits.shape[1]), desired)
            rival = others[np.argmax(logits[:, others], axis=1)]
            margins = logits[:, desired] - logits[np.arange(k), rival]
            probs = out[:, desired]
            seeds = np.zeros_like(logits)
            seeds[:, desired] += 1.0
            seeds[np.arange(k), rival] -= 1.0
        _, grads = backward_batch(net, acts, pres, seeds, seed_on_pre=True)
        return margins, grads, probs
    margins = np.empty(k)
    probs = np.empty(k)
    grads = np.empty_like(candidates)
    for i in range(k):
        trace = forward(net, candidates[i])
        logits = final_preactivation(net, trace)
        out = trace.output.array.ravel()
        if logits.size == 1:
            sign = 1.0 if desired == 1 else -1.0
            margins[i] = sign * logits[0]
            probs[i] = out[0] if desired == 1 else 1.0 - out[0]
            seed = np.array([sign])
        else:
            others = np.delete(np.arange(logits.size), desired)
            rival = others[int(np.argmax(logits[others]))]
            margins[i] = logits[desired] - logits[rival]
            probs[i] = out[desired]
            seed = np.zeros(logits.size)
            seed[desired] = 1.0
            seed[rival] = -1.0
        grads[i] = backward_from_final_pre(net, trace, seed)
    return margins, grads, probs


def cf_loss(candidates, query: CfQuery, net: Network):
    """Combined loss and its gradient with respect to the candidates.

    Returns (total, decomposition dict, gradient (k, M)). The diversity
    gradient uses the adjugate identity d det = det * tr(K^-1 dK); a
    singular kernel zeroes that term for the step.
    """
    candidates = np.atleast_2d(as_array(candidates, "candidates"))
    k, m = candidates.shape
    scales = query.scales
    margins, margin_grads, _ = _margin_and_gradients(
        net, candidates, query.desired_class
    )
    hinge = np.maximum(0.0, 1.0 - margins)
    yloss = float(hinge.mean())
    grad = np.zeros_like(candidates)
    active = hinge > 0.0
    grad[active] = -margin_grads[active] / k
    dists = np.abs((candidates - query.x) / scales).mean(axis=1)
    prox_grad = np.sign(candidates - query.x) / (m * scales)
    grad += query.lambda1 / k * prox_grad
    kern = 1.0 / (1.0 + _pairwise_distances(candidates, scales))
    det = float(np.linalg.det(kern))
    if query.lambda2 > 0.0 and k > 1:
        try:
            kinv = np.linalg.inv(kern)
            det_grad = np.zeros_like(candidates)
            for i in range(k):
                for j in range(k):
                    if i == j:
                        continue
                    dk = -kern[i, j] ** 2 * np.sign(
                        candidates[i] - candidates[j]
                    ) / (m * scales)
                    det_grad[i] += det * kinv[j, i] * dk
                    det_grad[j] -= det * kinv[j, i] * dk
            grad -= query.lambda2 * det_grad
        except np.linalg.LinAlgError:
            log.info("singular diversity kernel; skipping its gradient "
                     "this step")
    total = (yloss + query.lambda1 * float(dists.mean())
             - query.lambda2 * det)
    decomposition = {
        "yloss": yloss,
        "proximity": -float(dists.mean()),
        "diversity": det,
    }
    return total, decomposition, grad


def _project(candidates, query):
    lo = query.ranges[:, 0]
    hi = query.ranges[:, 1]
    candidates = np.clip(candidates, lo, hi)
    for idx in query.immutable:
        candidates[:, idx] = query.x[idx]
    return candidates


def generate_cfs(net: Network, query: CfQuery) -> CfSet:
    """Projected gradient descent from seeded jitter around x.

    Integer-coded features are rounded after optimization and validity is
    re-checked; an all-invalid result is returned, not raised.
    """
    if not net.is_dense_chain():
        raise ValidationError(
            "counterfactual search needs a differentiable dense model"
        )
    if net.input_shape != (query.x.shape[0],):
        raise ShapeError(
            f"query row has {query.x.shape[0]} features, model expects "
            f"{net.input_shape}"
        )
    rng = np.random.default_rng(query.seed)
    jitter = rng.uniform(-0.1, 0.1, size=(query.k, query.x.shape[0]))
    candidates = _project(query.x + jitter * query.scales, query)
    best = np.inf
    last_improved = 0
    iterations = 0
    for t in range(query.max_iters):
        iterations = t + 1
        total, _, grad = cf_loss(candidates, query, net)
        if total < best - STALL_IMPROVEMENT:
            best = total
            last_improved = t
        elif t - last_improved >= STALL_WINDOW:
            break
        for idx in query.immutable:
            grad[:, idx] = 0.0
        # harmonic step decay damps the subgradient oscillation the L1
        # and hinge kinks would otherwise sustain
        step = query.learning_rate / (1.0 + 0.01 * t)
        candidates = _project(candidates - step * grad, query)
    if query.integer_features:
        candidates[:, query.integer_features] = np.round(
            candidates[:, query.integer_features]
        )
        candidates = _project(candidates, query)
    total, decomposition, _ = cf_loss(candidates, query, net)
    _, _, probs = _margin_and_gradients(net, candidates,
                                        query.desired_class)
    valid = probs >= 0.5
    return CfSet(
        x=query.x.copy(),
        candidates=candidates,
        outputs=probs,
        valid=valid,
        yloss=decomposition["yloss"],
        proximity=decomposition["proximity"],
        diversity=decomposition["diversity"],
        loss=total,
        iterations=iterations,
        metadata={"seed": query.seed, "lambda1": query.lambda1,
                  "lambda2": query.lambda2, "k": query.k},
    )
