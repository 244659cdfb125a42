"""Satisfiability training, group querying and the revision cycle.

Training is gradient ascent on the knowledge base's aggregate degree:
each epoch evaluates the formula trees, pushes the aggregate's adjoint
back to every grounded predicate instance, and backpropagates those
per-row seeds through the model's dense chain. The revision cycle
appends caller constraints as weighted soft formulas, retrains from the
current parameters, and returns paired before/after reports (aggregate
satisfiability, per-bin group equivalence, Shapley parity of the
protected feature) so the caller decides whether to iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..models import dense_params, rebuild_dense
from ..network import Network, backward_batch, forward_batch, predict_batch
from ..shapley import BackgroundSet, exact_shapley, group_parity
from ..tensor import ValidationError
from .formula import ForAll, Pred, Var, equiv
from .semantics import (ZERO_CLAMP, DataColumn, Grounding, KnowledgeBase,
                        SatReport, check_grounded, eval_deferred, sat,
                        snapshot_id)


@dataclass
class TrainResult:
    net: Network
    trajectory: list          # SatReport per epoch plus the final state
    diverged: bool = False


def _merge_seed(accumulator, key, seeds):
    if key not in accumulator:
        accumulator[key] = seeds.copy()
    else:
        accumulator[key] += seeds


def train_constrained(net: Network, kb: KnowledgeBase,
                      grounding: Grounding, data, epochs: int,
                      lr: float, seed: int = 0,
                      freeze: tuple = ()) -> TrainResult:
    """Gradient ascent on the aggregate satisfiability.

    Only predicate heads bound to the model (net=None in the grounding)
    are trained; explicit auxiliary nets and crisp columns stay fixed.
    Layer indices in ``freeze`` are excluded from updates. Deterministic:
    full-batch updates, no internal randomness (``seed`` is recorded for
    provenance only).
    """
    if not kb.formulas:
        raise ValidationError("knowledge base must be nonempty for "
                              "training")
    if not net.is_dense_chain():
        raise ValidationError("training requires an all-dense model")
    check_grounded(kb, grounding)
    weights = np.array([w for _, w in kb.formulas], dtype=np.float64)
    if weights.sum() == 0:
        raise ValidationError("at least one formula weight must be > 0")
    weights = weights / weights.sum()
    frozen = set(freeze)
    model = net
    last_good = net
    trajectory = []
    for epoch in range(epochs):
        evaluated = [
            eval_deferred(f, grounding, data, model, kb.p, kb.p_exists)
            for f, _ in kb.formulas
        ]
        degrees = np.array([v for v, _, _ in evaluated])
        clamped = np.maximum(degrees, ZERO_CLAMP) if kb.p < 0 else degrees
        aggregate = float((weights @ np.maximum(clamped, 0.0) ** kb.p)
                          ** (1.0 / kb.p))
        if not np.isfinite(aggregate):
            return TrainResult(net=last_good, trajectory=trajectory,
                               diverged=True)
        last_good = model
        trajectory.append(SatReport(degrees=degrees.tolist(),
                                    aggregate=aggregate, epoch=epoch,
                                    snapshot=snapshot_id(model)))
        if aggregate > 0.0:
            adjoints = (weights * aggregate ** (1.0 - kb.p)
                        * clamped ** (kb.p - 1.0))
        else:
            adjoints = weights.copy()
        merged = {}
        evaluators = []
        for ((_, back, ev), adj) in zip(evaluated, adjoints):
            back(np.asarray(adj))
            evaluators.append(ev)
        for ev in evaluators:
            for key, seeds in ev.seeds.items():
                _merge_seed(merged, key, seeds)
        param_grads = [
            (np.zeros_like(layer.weights), np.zeros_like(layer.bias))
            for layer in model.layers
        ]
        touched = False
        for (pred_name, term_kind, term_name), seeds in merged.items():
            head = grounding.predicates[pred_name]
            if isinstance(head, DataColumn) or head.net is not None:
                continue
            if term_kind == "Var":
                domain = grounding.domain(term_name, data)
                rows = data.rows[domain]
            else:
                rows = np.atleast_2d(grounding.constants[term_name])
            if head.feature_indices is not None:
                rows = rows[:, head.feature_indices]
            acts, pres = forward_batch(model, rows)
            gout = np.zeros_like(acts[-1])
            gout[:, head.output_index] = seeds
            grads, _ = backward_batch(model, acts, pres, gout)
            for i, (gw, gb) in enumerate(grads):
                param_grads[i] = (param_grads[i][0] + gw,
                                  param_grads[i][1] + gb)
            touched = True
        if not touched or lr == 0.0:
            continue
        params = [
            (layer.weights, layer.bias) if i in frozen
            else (layer.weights + lr * gw, layer.bias + lr * gb)
            for i, (layer, (gw, gb)) in enumerate(zip(model.layers,
                                                      param_grads))
        ]
        model = rebuild_dense(model, params)
    final = sat(kb, grounding, data, model, epoch=epochs)
    trajectory.append(final)
    return TrainResult(net=model, trajectory=trajectory)


# ---------------------------------------------------------------------------
# group querying


@dataclass
class BinReport:
    index: int
    score_lo: float
    score_hi: float
    n_protected: int
    n_unprotected: int
    rate_protected: float | None
    rate_unprotected: float | None
    degree_protected: float | None
    degree_unprotected: float | None
    equivalence: float | None
    flag: str | None = None

    def to_record(self):
        return {k: getattr(self, k) for k in (
            "index", "score_lo", "score_hi", "n_protected",
            "n_unprotected", "rate_protected", "rate_unprotected",
            "degree_protected", "degree_unprotected", "equivalence",
            "flag")}


@dataclass
class GroupReport:
    bins: list
    single_bin_fallback: bool = False
    bin_masks: list | None = None   # row membership per bin, reusable

    def equivalences(self):
        return [b.equivalence for b in self.bins]

    def mid_bin(self) -> BinReport:
        return self.bins[len(self.bins) // 2]

    def to_record(self):
        return {
            "schema": 1,
            "kind": "group-report",
            "single_bin_fallback": self.single_bin_fallback,
            "bins": [b.to_record() for b in self.bins],
        }


def _group_degree(scores, p):
    if len(scores) == 0:
        return None
    values = np.maximum(scores, ZERO_CLAMP) if p < 0 else scores
    return float(np.mean(values ** p) ** (1.0 / p))


def _ratio(a, b):
    hi = max(a, b)
    if hi == 0.0:
        return 1.0
    return min(a, b) / hi


def _biresiduum(a, b):
    """Residuated material equivalence of two group degrees: the better
    of min/max on the degrees and on their complements.

    Exactly 1 for equal degrees; the complement side keeps saturated
    bins (both degrees near 0 or near 1) from reading as disagreement
    over ratios of vanishing numbers."""
    return max(_ratio(a, b), _ratio(1.0 - a, 1.0 - b))


def query_groups(net: Network, data, protected, bins: int,
                 p: float = 1.0, frozen_masks=None) -> GroupReport:
    """Quantile-bin the model scores and compare protected vs
    unprotected members bin by bin.

    Each bin reports group positive rates, the aggregated (p-mean,
    plain mean by default) predicate degree per group, and their
    material-equivalence degree. Bins missing one group are flagged
    rather than scored. ``frozen_masks`` (from an earlier report's
    ``bin_masks``) re-scores the same bin populations under a revised
    model, which is what before/after comparisons need.
    """
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    scores = predict_batch(net, data.rows)
    if scores.shape[1] != 1:
        raise ValidationError("group querying expects a single sigmoid "
                              "output")
    scores = scores[:, 0]
    prot_col = data.column(protected) if isinstance(protected, str) \
        else data.rows[:, protected]
    single = False
    if frozen_masks is not None:
        masks = [np.asarray(m, dtype=bool) for m in frozen_masks]
    elif scores.max() - scores.min() < 1e-15:
        single = True
        masks = [np.ones(len(scores), dtype=bool)]
    else:
        edges = np.quantile(scores, np.linspace(0.0, 1.0, bins + 1))
        masks = []
        for b in range(bins):
            lo, hi = edges[b], edges[b + 1]
            if b == bins - 1:
                masks.append((scores >= lo) & (scores <= hi))
            else:
                masks.append((scores >= lo) & (scores < hi))
    reports = []
    for b, mask in enumerate(masks):
        in_bin = scores[mask]
        prot_scores = scores[mask & (prot_col == 1.0)]
        unprot_scores = scores[mask & (prot_col == 0.0)]
        report = BinReport(
            index=b,
            score_lo=float(in_bin.min()) if in_bin.size else 0.0,
            score_hi=float(in_bin.max()) if in_bin.size else 0.0,
            n_protected=len(prot_scores),
            n_unprotected=len(unprot_scores),
            rate_protected=float(np.mean(prot_scores >= 0.5))
            if len(prot_scores) else None,
            rate_unprotected=float(np.mean(unprot_scores >= 0.5))
            if len(unprot_scores) else None,
            degree_protected=_group_degree(prot_scores, p),
            degree_unprotected=_group_degree(unprot_scores, p),
            equivalence=None,
        )
        if len(prot_scores) == 0 or len(unprot_scores) == 0:
            report.flag = "missing-group"
        else:
            report.equivalence = _biresiduum(report.degree_protected,
                                             report.degree_unprotected)
        reports.append(report)
    return GroupReport(bins=reports, single_bin_fallback=single,
                       bin_masks=masks)


def mid_bin_masks(net: Network, data, protected, bins: int = 3):
    """Row masks of the middle score-quantile bin split by group."""
    scores = predict_batch(net, data.rows)[:, 0]
    edges = np.quantile(scores, np.linspace(0.0, 1.0, bins + 1))
    mid = bins // 2
    mask = (scores >= edges[mid]) & (scores < edges[mid + 1])
    prot_col = data.column(protected) if isinstance(protected, str) \
        else data.rows[:, protected]
    return mask & (prot_col == 1.0), mask & (prot_col == 0.0)


def mid_bin_equivalence_constraint(net: Network, data, protected,
                                   bins: int = 3):
    """Fairness constraint over the current middle bin: every protected
    member's predicted degree must be materially equivalent to every
    unprotected member's. Returns (formula, variable domains) for the
    grounding."""
    prot_mask, unprot_mask = mid_bin_masks(net, data, protected, bins)
    if not prot_mask.any() or not unprot_mask.any():
        raise ValidationError(
            "middle bin does not contain both groups; constraint is "
            "undefined"
        )
    formula = ForAll("xmidp", ForAll("xmidu", equiv(
        Pred("P", (Var("xmidp"),)), Pred("P", (Var("xmidu"),))
    )))
    domains = {"xmidp": np.flatnonzero(prot_mask),
               "xmidu": np.flatnonzero(unprot_mask)}
    return formula, domains


def shapley_parity(net: Network, data, feature, n_rows: int = 40,
                   n_background: int = 25, seed: int = 0) -> float:
    """Group parity of the feature's exact Shapley attributions over a
    stratified row sample."""
    rng = np.random.default_rng(seed)
    col = data.feature_index(feature) if isinstance(feature, str) \
        else int(feature)
    groups = data.rows[:, col]
    prot_idx = np.flatnonzero(groups == 1.0)
    unprot_idx = np.flatnonzero(groups == 0.0)
    if len(prot_idx) == 0 or len(unprot_idx) == 0:
        raise ValidationError("both groups must appear in the data")
    half = max(1, n_rows // 2)
    sample = np.concatenate([
        rng.choice(prot_idx, size=min(half, len(prot_idx)), replace=False),
        rng.choice(unprot_idx, size=min(half, len(unprot_idx)),
                   replace=False),
    ])
    bg = BackgroundSet(data.rows[rng.choice(data.n_rows,
                                            size=min(n_background,
                                                     data.n_rows),
                                            replace=False)])
    attrs = [exact_shapley(net, data.rows[i], bg) for i in sample]
    return group_parity(attrs, data.rows[sample, col], col)


# ---------------------------------------------------------------------------
# revision cycle


@dataclass
class CycleConfig:
    epochs: int = 100
    lr: float = 1.0
    constraint_weight: float = 1.5
    bins: int = 3
    protected: str = "protected"
    parity_rows: int = 40
    parity_background: int = 25
    seed: int = 0
    freeze: tuple = ()


@dataclass
class RevisionResult:
    net: Network
    kb: KnowledgeBase
    sat_before: SatReport
    sat_after: SatReport
    groups_before: GroupReport
    groups_after: GroupReport
    parity_before: float
    parity_after: float
    trajectory: list
    snapshots: dict = field(default_factory=dict)

    def to_record(self):
        return {
            "schema": 1,
            "kind": "revision-report",
            "sat_before": self.sat_before.to_record(),
            "sat_after": self.sat_after.to_record(),
            "groups_before": self.groups_before.to_record(),
            "groups_after": self.groups_after.to_record(),
            "parity_before": self.parity_before,
            "parity_after": self.parity_after,
            "snapshots": sorted(self.snapshots),
        }


def revise(net: Network, kb: KnowledgeBase, new_constraints, data,
           grounding: Grounding, config: CycleConfig) -> RevisionResult:
    """One revision cycle: extend the knowledge base with the caller's
    soft constraints, retrain from the current parameters, and report
    satisfiability, per-bin equivalence and Shapley parity before and
    after. Parameter snapshots of both states are kept."""
    extended = KnowledgeBase(
        formulas=list(kb.formulas) + [
            (c, config.constraint_weight) for c in new_constraints
        ],
        p=kb.p, p_exists=kb.p_exists,
    )
    sat_before = sat(extended, grounding, data, net)
    groups_before = query_groups(net, data, config.protected, config.bins)
    parity_before = shapley_parity(net, data, config.protected,
                                   config.parity_rows,
                                   config.parity_background, config.seed)
    result = train_constrained(net, extended, grounding, data,
                               config.epochs, config.lr, seed=config.seed,
                               freeze=config.freeze)
    trained = result.net
    sat_after = sat(extended, grounding, data, trained)
    # re-score the same bin populations so the change is attributable to
    # the revision, not to bin drift
    groups_after = query_groups(trained, data, config.protected,
                                config.bins,
                                frozen_masks=groups_before.bin_masks)
    parity_after = shapley_parity(trained, data, config.protected,
                                  config.parity_rows,
                                  config.parity_background, config.seed)
    snapshots = {snapshot_id(net): dense_params(net),
                 snapshot_id(trained): dense_params(trained)}
    return RevisionResult(net=trained, kb=extended, sat_before=sat_before,
                          sat_after=sat_after, groups_before=groups_before,
                          groups_after=groups_after,
                          parity_before=parity_before,
                          parity_after=parity_after,
                          trajectory=result.trajectory,
                          snapshots=snapshots)
