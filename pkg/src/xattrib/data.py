"""Synthetic datasets and graph generation.

The credit and recidivism generators stand in for proprietary data: each
records its generating rule in ``metadata`` so tests can recompute labels
independently. The graph generator grows preferential-attachment graphs
seeded from a clique (degree is never zero, so attachment probabilities
are always well defined).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, ValidationError

FEATURE_KINDS = ("continuous", "integer", "categorical")


@dataclass
class TabularDataset:
    feature_names: list
    rows: np.ndarray            # (n, m) float64
    labels: np.ndarray          # (n,) values in {0, 1} for binary tasks
    kinds: list                 # per-feature kind
    protected: list             # per-feature protected-attribute flag
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        m = len(self.feature_names)
        if self.rows.ndim != 2 or self.rows.shape[1] != m:
            raise ShapeError(
                f"rows shape {self.rows.shape} does not match "
                f"{m} feature names"
            )
        if self.labels.shape != (self.rows.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.rows.shape[0]} rows"
            )
        if not set(np.unique(self.labels)) <= {0.0, 1.0}:
            raise ValidationError("labels must be binary (0/1)")
        if len(self.kinds) != m or len(self.protected) != m:
            raise ShapeError("kinds/protected must have one entry per feature")
        for k in self.kinds:
            if k not in FEATURE_KINDS:
                raise ValidationError(f"unknown feature kind {k!r}")

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def n_features(self):
        return self.rows.shape[1]

    def feature_index(self, name):
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def column(self, name):
        return self.rows[:, self.feature_index(name)]

    def ranges(self):
        """Observed (min, max) per feature; used as counterfactual scales."""
        return {
            name: (float(self.rows[:, i].min()), float(self.rows[:, i].max()))
            for i, name in enumerate(self.feature_names)
        }


@dataclass
class GraphInstance:
    adjacency: np.ndarray       # (n, n) symmetric 0/1, zero diagonal
    laplacian: np.ndarray       # symmetric-normalized, self-loops included
    features: np.ndarray        # (n, d) node features
    label: int                  # growth-factor class

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValidationError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValidationError("adjacency diagonal must be zero")
        self.adjacency = a
        self.laplacian = np.asarray(self.laplacian, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != a.shape[0]:
            raise ShapeError("one feature row per node required")

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        return int(self.adjacency.sum()) // 2


def normalized_laplacian(adjacency) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with self-loops, the propagation matrix used
    by the graph-convolution layers."""
    a = np.asarray(adjacency, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    d = a_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def barabasi_albert(n: int, m: int, seed: int) -> GraphInstance:
    """Preferential-attachment graph: a clique of m+1 nodes, then each new
    node attaches m edges to distinct existing nodes with probability
    proportional to current degree.

    Edge count is exactly C(m+1, 2) + m * (n - m - 1).
    """
    if not 1 <= m < n:
        raise ValidationError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n))
    clique = m + 1
    for i in range(clique):
        for j in range(i + 1, clique):
            adj[i, j] = adj[j, i] = 1.0
    for new in range(clique, n):
        weights = adj[:new, :new].sum(axis=1)
        targets = []
        for _ in range(m):
            p = weights / weights.sum()
            t = int(rng.choice(new, p=p))
            targets.append(t)
            weights = weights.copy()
            weights[t] = 0.0  # sample targets without replacement
        for t in targets:
            adj[new, t] = adj[t, new] = 1.0
    degree = adj.sum(axis=1)
    features = np.column_stack([np.ones(n), degree / degree.max()])
    return GraphInstance(adjacency=adj,
                         laplacian=normalized_laplacian(adj),
                         features=features, label=m)


_CREDIT_RULE = {
    "type": "linear-threshold",
    "intercept": 0.1,
    "weights": {
        "payment_delay_mean": -0.22,
        "age": 0.028,
        "loan_amount": -0.00040,
        "employed": 1.1,
    },
    "center": {"payment_delay_mean": 0.0, "age": 40.0,
               "loan_amount": 3000.0, "employed": 0.0},
    "positive_label_means": "loan repaid (amortized)",
}


def credit_ground_truth(rows, feature_names) -> np.ndarray:
    """Recompute synth_credit labels from the recorded rule."""
    rule = _CREDIT_RULE
    z = np.full(rows.shape[0], rule["intercept"])
    for name, w in rule["weights"].items():
        j = feature_names.index(name)
        z = z + w * (rows[:, j] - rule["center"][name])
    return (z >= 0.0).astype(np.float64)


def synth_credit(n_rows: int, seed: int) -> TabularDataset:
    """Synthetic credit-scoring table with a known linear-threshold label
    rule (label 1 = loan repaid). Larger mean payment delay lowers the
    repayment label; the rule is recorded in metadata."""
    if n_rows < 1:
        raise ValidationError(f"n_rows must be >= 1, got {n_rows}")
    rng = np.random.default_rng(seed)
    delay = rng.gamma(shape=2.0, scale=2.2, size=n_rows)
    age = rng.integers(18, 75, size=n_rows).astype(np.float64)
    loan = np.round(rng.lognormal(mean=8.0, sigma=0.45, size=n_rows), 2)
    employed = (rng.random(n_rows) < 0.65).astype(np.float64)
    names = ["payment_delay_mean", "age", "loan_amount", "employed"]
    rows = np.column_stack([delay, age, loan, employed])
    labels = credit_ground_truth(rows, names)
    return TabularDataset(
        feature_names=names,
        rows=rows,
        labels=labels,
        kinds=["continuous", "integer", "continuous", "categorical"],
        protected=[False, False, False, False],
        metadata={"generator": "synth_credit", "seed": seed,
                  "rule": json.loads(json.dumps(_CREDIT_RULE))},
    )


def synth_recidivism(n_rows: int, bias_strength: float,
                     seed: int) -> TabularDataset:
    """Synthetic recidivism table with a binary protected attribute.

    A risk score from the non-protected features splits rows into
    terciles. Labels in the extreme terciles ignore the protected
    attribute; in the middle tercile the positive rate is
    0.5 +/- bias_strength/2 by group, which makes the label/protected
    correlation equal bias_strength there by construction.
    """
    if n_rows < 1:
        raise ValidationError(f"n_rows must be >= 1, got {n_rows}")
    if not 0.0 <= bias_strength <= 1.0:
        raise ValidationError(
            f"bias_strength must be in [0, 1], got {bias_strength}"
        )
    rng = np.random.default_rng(seed)
    priors = np.minimum(rng.geometric(0.35, size=n_rows) - 1, 14).astype(
        np.float64
    )
    age = rng.integers(18, 70, size=n_rows).astype(np.float64)
    severity = (rng.random(n_rows) < 0.45).astype(np.float64)
    protected = (rng.random(n_rows) < 0.5).astype(np.float64)
    risk = (0.55 * priors / 14.0
            + 0.30 * (70.0 - age) / 52.0
            + 0.15 * severity)
    lo, hi = np.quantile(risk, [1.0 / 3.0, 2.0 / 3.0])
    labels = np.empty(n_rows)
    low_p, high_p = 0.15, 0.85
    u = rng.random(n_rows)
    for i in range(n_rows):
        if risk[i] < lo:
            p = low_p
        elif risk[i] >= hi:
            p = high_p
        else:
            p = 0.5 + bias_strength / 2.0 * (2.0 * protected[i] - 1.0)
        labels[i] = 1.0 if u[i] < p else 0.0
    names = ["priors_count", "age", "charge_severity", "protected"]
    rows = np.column_stack([priors, age, severity, protected])
    return TabularDataset(
        feature_names=names,
        rows=rows,
        labels=labels,
        kinds=["integer", "integer", "categorical", "categorical"],
        protected=[False, False, False, True],
        metadata={
            "generator": "synth_recidivism", "seed": seed,
            "bias_strength": bias_strength,
            "rule": {
                "risk_weights": {"priors_count": 0.55 / 14.0,
                                 "age": -0.30 / 52.0,
                                 "charge_severity": 0.15},
                "tercile_bounds": [float(lo), float(hi)],
                "low_rate": low_p, "high_rate": high_p,
                "mid_rate_by_group": [0.5 - bias_strength / 2.0,
                                      0.5 + bias_strength / 2.0],
            },
        },
    )


# ---------------------------------------------------------------------------
# CSV files: header mandatory, ',' separator, '.' decimal point, no missing
# cells (imputation is the caller's modeling decision). A .meta.json sidecar
# carries kinds, protected flags and generator metadata.

LABEL_COLUMN = "label"


def save_dataset(ds: TabularDataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [LABEL_COLUMN])
        for row, label in zip(ds.rows, ds.labels):
            writer.writerow([repr(float(v)) for v in row]
                            + [repr(float(label))])
    sidecar = {
        "kinds": list(ds.kinds),
        "protected": [bool(p) for p in ds.protected],
        "metadata": ds.metadata,
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_dataset(path: str) -> TabularDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV, header row is "
                                  "mandatory") from None
        if LABEL_COLUMN not in header:
            raise ValidationError(
                f"{path}: no '{LABEL_COLUMN}' column in header {header}"
            )
        label_idx = header.index(LABEL_COLUMN)
        names = [h for i, h in enumerate(header) if i != label_idx]
        rows, labels = [], []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise ValidationError(
                    f"{path}:{line_no}: expected {len(header)} cells, "
                    f"got {len(record)}"
                )
            values = []
            for col, cell in enumerate(record):
                cell = cell.strip()
                if cell == "":
                    raise ValidationError(
                        f"{path}:{line_no}: missing value in column "
                        f"{header[col]!r}"
                    )
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}:{line_no}: cell {cell!r} in column "
                        f"{header[col]!r} is not a decimal number"
                    ) from None
            labels.append(values.pop(label_idx))
            rows.append(values)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    rows = np.asarray(rows)
    kinds = None
    protected = None
    metadata = {}
    sidecar_path = path + ".meta.json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        kinds = sidecar.get("kinds")
        protected = sidecar.get("protected")
        metadata = sidecar.get("metadata", {})
    if kinds is None:
        kinds = [
            "integer" if np.all(rows[:, j] == np.round(rows[:, j]))
            else "continuous"
            for j in range(rows.shape[1])
        ]
    if protected is None:
        protected = [False] * rows.shape[1]
    return TabularDataset(feature_names=names, rows=rows,
                          labels=np.asarray(labels), kinds=kinds,
                          protected=protected, metadata=metadata)


def save_graph(graph: GraphInstance, path: str) -> None:
    payload = {
        "adjacency": graph.adjacency.astype(int).tolist(),
        "features": graph.features.tolist(),
        "label": int(graph.label),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_graph(path: str) -> GraphInstance:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("adjacency", "features", "label"):
        if key not in payload:
            raise ValidationError(f"{path}: missing graph field {key!r}")
    adj = np.asarray(payload["adjacency"], dtype=np.float64)
    return GraphInstance(adjacency=adj, laplacian=normalized_laplacian(adj),
                         features=np.asarray(payload["features"]),
                         label=int(payload["label"]))


def expected_ba_edges(n: int, m: int) -> int:
    return math.comb(m + 1, 2) + m * (n - m - 1)
