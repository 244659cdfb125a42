"""Exact and sampled Shapley attribution with an additive explanation
model and group-parity summaries.

The coalition value of a feature subset S is the interventional
marginalization: features in S are pinned to the explained row, the rest
are replaced by background rows, and the model outputs are averaged. The
exact estimator enumerates all 2^M coalitions; per-feature contributions
are accumulated into a mask-indexed table and reduced in fixed mask
order, so the result is independent of enumeration order bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import Network, predict_batch
from .tensor import ShapeError, UnsupportedError, ValidationError, as_array

EXACT_FEATURE_LIMIT = 20


class BackgroundSet:
    """Background rows the coalition value marginalizes over."""

    def __init__(self, rows):
        rows = as_array(rows, "background rows")
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValidationError(
                f"background must be a non-empty row matrix, got shape "
                f"{rows.shape}"
            )
        self.rows = rows

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def width(self):
        return self.rows.shape[1]


@dataclass
class Attribution:
    """Baseline expectation plus per-feature contributions.

    In exact mode phi0 + sum(phi) equals the model output at the
    explained row (local accuracy)."""

    phi0: float
    phi: np.ndarray
    output_index: int
    feature_names: list | None = None
    stderr: np.ndarray | None = None
    method: str = "exact"
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.phi)

    def to_record(self) -> dict:
        rec = {
            "schema": 1,
            "kind": "attribution",
            "method": self.method,
            "output_index": self.output_index,
            "phi0": self.phi0,
            "phi": [float(v) for v in self.phi],
        }
        if self.feature_names is not None:
            rec["feature_names"] = list(self.feature_names)
        if self.stderr is not None:
            rec["stderr"] = [float(v) for v in self.stderr]
        if self.metadata:
            rec["metadata"] = self.metadata
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Attribution":
        if rec.get("kind") != "attribution" or rec.get("schema") != 1:
            raise ValidationError(
                f"not a schema-1 attribution record: {rec.get('kind')!r}"
            )
        stderr = rec.get("stderr")
        return cls(
            phi0=float(rec["phi0"]),
            phi=np.asarray(rec["phi"], dtype=np.float64),
            output_index=int(rec["output_index"]),
            feature_names=rec.get("feature_names"),
            stderr=None if stderr is None else np.asarray(stderr),
            method=rec.get("method", "exact"),
            metadata=rec.get("metadata", {}),
        )


def _validate(net, x, bg):
    x = as_array(x, "row")
    if x.ndim != 1:
        raise ShapeError(f"explained row must be 1-D, got shape {x.shape}")
    if not isinstance(bg, BackgroundSet):
        bg = BackgroundSet(bg)
    if bg.width != x.shape[0]:
        raise ShapeError(
            f"background width {bg.width} does not match row length "
            f"{x.shape[0]}"
        )
    if net.input_shape != (x.shape[0],):
        raise ShapeError(
            f"model expects input shape {net.input_shape}, row has "
            f"{x.shape[0]} features"
        )
    return x, bg


def _masked_value(net, x, mask_indices, bg, out):
    rows = bg.rows.copy()
    if len(mask_indices):
        rows[:, mask_indices] = x[mask_indices]
    outputs = predict_batch(net, rows).reshape(bg.n_rows, -1)
    return float(outputs[:, out].mean())


def coalition_value(net: Network, x, subset, bg, out: int = 0) -> float:
    """Mean model output with features in ``subset`` fixed to x and the
    rest marginalized over the background rows."""
    x, bg = _validate(net, x, bg)
    subset = sorted(set(int(i) for i in subset))
    if subset and (subset[0] < 0 or subset[-1] >= x.shape[0]):
        raise ValidationError(f"subset {subset} out of feature range")
    return _masked_value(net, x, np.asarray(subset, dtype=np.intp), bg, out)


def _mask_indices(mask, m):
    return np.asarray([i for i in range(m) if mask >> i & 1], dtype=np.intp)


def exact_shapley(net: Network, x, bg, out: int = 0,
                  feature_names=None, subset_order=None) -> Attribution:
    """Shapley values by full coalition enumeration (M <= 20)."""
    x, bg = _validate(net, x, bg)
    m = x.shape[0]
    if m > EXACT_FEATURE_LIMIT:
        raise UnsupportedError(
            f"{m} features would enumerate 2^{m} coalitions; use "
            "sampled_shapley instead"
        )
    n_masks = 1 << m
    order = range(n_masks) if subset_order is None else subset_order
    values = np.empty(n_masks)
    for mask in order:
        values[mask] = _masked_value(net, x, _mask_indices(mask, m), bg, out)
    # |S|! (M - |S| - 1)! / M! by coalition size
    fact = [math.factorial(k) for k in range(m + 1)]
    size_weight = np.array(
        [fact[s] * fact[m - s - 1] / fact[m] for s in range(m)]
    )
    sizes = np.array([bin(mask).count("1") for mask in range(n_masks)])
    phi = np.empty(m)
    for i in range(m):
        bit = 1 << i
        without = np.asarray(
            [mask for mask in range(n_masks) if not mask & bit],
            dtype=np.intp,
        )
        deltas = values[without | bit] - values[without]
        phi[i] = float(np.dot(size_weight[sizes[without]], deltas))
    return Attribution(phi0=float(values[0]), phi=phi, output_index=out,
                       feature_names=list(feature_names)
                       if feature_names else None,
                       method="exact")


def sampled_shapley(net: Network, x, bg, out: int = 0,
                    n_permutations: int = 200, seed: int = 0,
                    feature_names=None) -> Attribution:
    """Permutation-sampling estimator with per-feature standard errors.

    Unbiased for the exact value; deterministic per seed.
    """
    if n_permutations < 1:
        raise ValidationError(
            f"n_permutations must be >= 1, got {n_permutations}"
        )
    x, bg = _validate(net, x, bg)
    m = x.shape[0]
    rng = np.random.default_rng(seed)
    base = _masked_value(net, x, np.asarray([], dtype=np.intp), bg, out)
    marginals = np.empty((n_permutations, m))
    for p in range(n_permutations):
        perm = rng.permutation(m)
        prev = base
        members = []
        for i in perm:
            members.append(int(i))
            val = _masked_value(net, x, np.asarray(members, dtype=np.intp),
                                bg, out)
            marginals[p, i] = val - prev
            prev = val
    phi = marginals.mean(axis=0)
    if n_permutations > 1:
        stderr = marginals.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    else:
        stderr = np.zeros(m)
    return Attribution(phi0=base, phi=phi, output_index=out,
                       feature_names=list(feature_names)
                       if feature_names else None,
                       stderr=stderr, method="sampled",
                       metadata={"n_permutations": n_permutations,
                                 "seed": seed})


def explanation_model(attr: Attribution, z) -> float:
    """Additive surrogate g(z) = phi0 + sum_i z_i phi_i over a binary
    coalition indicator z."""
    z = as_array(z, "z")
    if z.shape != (attr.n_features,):
        raise ShapeError(
            f"z must have length {attr.n_features}, got shape {z.shape}"
        )
    if not set(np.unique(z)) <= {0.0, 1.0}:
        raise ValidationError("z must be a binary vector")
    return float(attr.phi0 + np.dot(z, attr.phi))


def group_parity(attrs, groups, feature: int) -> float:
    """Mean attribution of ``feature`` in the protected group minus the
    unprotected group."""
    if not attrs:
        raise ValidationError("need at least one attribution")
    groups = as_array(groups, "groups")
    if groups.shape != (len(attrs),):
        raise ShapeError(
            f"groups must align with {len(attrs)} attributions, got "
            f"shape {groups.shape}"
        )
    values = np.array([a.phi[feature] for a in attrs])
    prot = values[groups == 1.0]
    unprot = values[groups == 0.0]
    if len(prot) == 0 or len(unprot) == 0:
        raise ValidationError(
            "both protected and unprotected groups must be present"
        )
    return float(prot.mean() - unprot.mean())
