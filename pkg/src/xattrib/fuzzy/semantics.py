"""Differentiable fuzzy semantics: product family connectives, p-mean
quantifiers, groundings, formula evaluation and knowledge-base
satisfiability.

Conjunction is the product t-norm, disjunction its dual co-norm and
implication the Reichenbach form 1 - a + ab; on {0, 1} inputs every
connective reproduces the classical truth table. Quantifiers aggregate
with the generalized mean. Evaluation is vectorized: a formula value is
an array with one axis per quantified variable in scope, and a backward
pass accumulates d(value)/d(predicate degree) per domain row so the
trainer can push gradients into the grounded network heads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..network import Network, predict_batch
from ..tensor import UnsupportedError, ValidationError
from .formula import (And, Exists, ForAll, Formula, Implies, Not, Or, Pred,
                      Var, free_vars, predicates_in)

ZERO_CLAMP = 1e-12
DEFAULT_P = 2.0
DEFAULT_P_EXISTS = 6.0


def pmean(values, p: float, axis=None) -> float | np.ndarray:
    """Generalized mean ((1/n) sum v^p)^(1/p).

    p = 0 is rejected (the geometric-mean limit is not implemented);
    for negative p, zero inputs are clamped to 1e-12.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("pmean of an empty sequence")
    if p == 0:
        raise ValidationError("p = 0 is not supported (geometric-mean "
                              "limit not implemented)")
    if p < 0:
        values = np.maximum(values, ZERO_CLAMP)
    mean_pow = np.mean(values ** p, axis=axis)
    result = mean_pow ** (1.0 / p)
    return float(result) if axis is None and np.ndim(result) == 0 else result


def t_and(a, b):
    return a * b


def t_or(a, b):
    return a + b - a * b


def t_not(a):
    return 1.0 - a


def t_implies(a, b):
    return 1.0 - a + a * b


@dataclass
class PredicateHead:
    """Predicate grounded in a network head.

    ``net=None`` refers to the model under training/query, letting the
    same grounding follow parameter updates. ``feature_indices`` selects
    the input columns fed to the network (None means all, in order). The
    resolved head must end in a sigmoid so truth values live in [0, 1].
    """

    feature_indices: list | None = None
    output_index: int = 0
    net: Network | None = None

    def resolve(self, model):
        net = self.net if self.net is not None else model
        if net is None:
            raise ValidationError(
                "predicate head has no network and no model was supplied"
            )
        last = net.layers[-1]
        if getattr(last, "activation", None) != "sigmoid":
            raise ValidationError(
                "predicate networks must end in a sigmoid so degrees "
                "stay in [0, 1]"
            )
        return net

    def truths(self, rows, model):
        net = self.resolve(model)
        cols = rows if self.feature_indices is None else \
            rows[:, self.feature_indices]
        out = predict_batch(net, cols)
        return out[:, self.output_index]


@dataclass
class DataColumn:
    """Crisp predicate read straight from a dataset column (values must
    already lie in [0, 1], e.g. labels or binary attributes)."""

    column: str

    def truths(self, rows, data):
        values = data.rows[:, data.feature_index(self.column)] \
            if self.column != "label" else data.labels
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValidationError(
                f"column {self.column!r} holds values outside [0, 1]"
            )
        return values


@dataclass
class Grounding:
    """Symbol bindings: predicates to network heads or crisp columns,
    variables to row-index domains, constants to fixed rows."""

    predicates: dict = field(default_factory=dict)
    variables: dict = field(default_factory=dict)   # name -> row indices
    constants: dict = field(default_factory=dict)   # name -> feature row

    def domain(self, var, data):
        if var in self.variables:
            return np.asarray(self.variables[var], dtype=np.intp)
        return np.arange(data.n_rows, dtype=np.intp)


@dataclass
class KnowledgeBase:
    formulas: list                      # (Formula, weight >= 0) pairs
    p: float = DEFAULT_P
    p_exists: float = DEFAULT_P_EXISTS

    def __post_init__(self):
        for _, weight in self.formulas:
            if weight < 0:
                raise ValidationError("formula weights must be >= 0")
        if self.p == 0:
            raise ValidationError("aggregation exponent p must be nonzero")


@dataclass
class SatReport:
    degrees: list
    aggregate: float
    epoch: int | None = None
    snapshot: str | None = None

    def to_record(self):
        return {
            "schema": 1,
            "kind": "sat-report",
            "degrees": [float(d) for d in self.degrees],
            "aggregate": float(self.aggregate),
            "epoch": self.epoch,
            "snapshot": self.snapshot,
        }


def snapshot_id(net: Network) -> str:
    digest = hashlib.sha256()
    for layer in net.layers:
        digest.update(layer.weights.tobytes())
        digest.update(layer.bias.tobytes())
    return digest.hexdigest()[:12]


def _unbroadcast(adj, shape):
    """Reduce an adjoint back to a child's (broadcastable) shape."""
    adj = np.asarray(adj)
    while adj.ndim > len(shape):
        adj = adj.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and adj.shape[ax] != 1:
            adj = adj.sum(axis=ax, keepdims=True)
    return adj


class _Evaluator:
    """One evaluation pass: forward values plus per-predicate-instance
    degree adjoints (keyed by (pred name, term))."""

    def __init__(self, grounding, data, model, p_forall, p_exists):
        self.g = grounding
        self.data = data
        self.model = model
        self.p_forall = p_forall
        self.p_exists = p_exists
        self.truth_cache = {}
        self.seeds = {}

    def _instance_key(self, pred_name, term):
        return (pred_name, type(term).__name__, term.name)

    def _truths(self, pred_name, term):
        key = self._instance_key(pred_name, term)
        if key in self.truth_cache:
            return self.truth_cache[key]
        if pred_name not in self.g.predicates:
            raise ValidationError(f"predicate {pred_name!r} is not "
                                  "grounded")
        grounded = self.g.predicates[pred_name]
        if isinstance(term, Var):
            domain = self.g.domain(term.name, self.data)
            if isinstance(grounded, DataColumn):
                values = grounded.truths(None, self.data)[domain]
            else:
                values = grounded.truths(self.data.rows[domain], self.model)
        else:
            if term.name not in self.g.constants:
                raise ValidationError(f"constant {term.name!r} is not "
                                      "grounded")
            row = np.atleast_2d(self.g.constants[term.name])
            if isinstance(grounded, DataColumn):
                raise UnsupportedError(
                    "column predicates apply to dataset variables only"
                )
            values = grounded.truths(row, self.model)
        self.truth_cache[key] = values
        self.seeds.setdefault(key, np.zeros_like(values))
        return values

    def eval(self, node, scope):
        """Returns (value array, backward fn). The value has one axis per
        scope variable (size 1 where unused), scalar for empty scope."""
        if isinstance(node, Pred):
            if len(node.args) != 1:
                raise UnsupportedError(
                    "only unary predicates are supported in evaluation"
                )
            term = node.args[0]
            if isinstance(term, Var) and term.name not in [v for v, _ in
                                                           scope]:
                raise ValidationError(
                    f"unbound variable {term.name!r} in predicate "
                    f"{node.name!r}"
                )
            values = self._truths(node.name, term)
            key = self._instance_key(node.name, term)
            if isinstance(term, Var):
                axis = [v for v, _ in scope].index(term.name)
                shape = [1] * len(scope)
                shape[axis] = len(values)
                val = values.reshape(shape)

                def back(adj):
                    reduced = _unbroadcast(adj, tuple(shape))
                    self.seeds[key] += reduced.reshape(len(values))
            else:
                val = np.full([1] * len(scope) if scope else (),
                              values[0])

                def back(adj):
                    self.seeds[key][0] += float(np.sum(adj))
            return val, back
        if isinstance(node, Not):
            v, b = self.eval(node.arg, scope)

            def back(adj):
                b(-adj)
            return 1.0 - v, back
        if isinstance(node, (And, Or, Implies)):
            va, ba = self.eval(node.left, scope)
            vb, bb = self.eval(node.right, scope)
            if isinstance(node, And):
                val = va * vb
                da, db = vb, va
            elif isinstance(node, Or):
                val = va + vb - va * vb
                da, db = 1.0 - vb, 1.0 - va
            else:
                val = 1.0 - va + va * vb
                da, db = vb - 1.0, va

            def back(adj):
                ba(_unbroadcast(adj * da, np.shape(va)))
                bb(_unbroadcast(adj * db, np.shape(vb)))
            return val, back
        if isinstance(node, (ForAll, Exists)):
            var = node.var
            if var in [v for v, _ in scope]:
                raise ValidationError(f"variable {var!r} is already bound")
            domain = self.g.domain(var, self.data)
            if len(domain) == 0:
                raise ValidationError(f"variable {var!r} has an empty "
                                      "domain")
            inner_scope = scope + [(var, len(domain))]
            v, b = self.eval(node.body, inner_scope)
            full_shape = tuple(n for _, n in inner_scope)
            vfull = np.broadcast_to(v, full_shape)
            p = self.p_forall if isinstance(node, ForAll) else self.p_exists
            clamped = np.maximum(vfull, ZERO_CLAMP) if p < 0 else vfull
            mean_pow = np.mean(clamped ** p, axis=-1)
            val = mean_pow ** (1.0 / p)

            def back(adj):
                n = full_shape[-1]
                with np.errstate(divide="ignore", invalid="ignore"):
                    grad = ((1.0 / n) * np.asarray(val)[..., None]
                            ** (1.0 - p) * clamped ** (p - 1.0))
                grad = np.where(np.isfinite(grad), grad, 0.0)
                b(_unbroadcast(np.asarray(adj)[..., None] * grad,
                               np.shape(v)))
            return val, back
        raise ValidationError(f"not a formula node: {node!r}")


def eval_formula(formula: Formula, grounding: Grounding, data,
                 model: Network | None = None, p: float = DEFAULT_P,
                 p_exists: float = DEFAULT_P_EXISTS) -> float:
    """Degree of truth of a closed formula in [0, 1]."""
    degree, _ = eval_with_seeds(formula, grounding, data, model, p,
                                p_exists)
    return degree


def eval_deferred(formula: Formula, grounding: Grounding, data,
                  model=None, p=DEFAULT_P, p_exists=DEFAULT_P_EXISTS):
    """Degree plus a deferred backward: call back(adjoint) and read the
    evaluator's per-predicate-instance seed accumulators."""
    unbound = free_vars(formula)
    if unbound:
        raise ValidationError(
            f"formula must be closed; free variables {sorted(unbound)}"
        )
    ev = _Evaluator(grounding, data, model, p, p_exists)
    value, back = ev.eval(formula, [])
    return float(np.asarray(value)), back, ev


def eval_with_seeds(formula: Formula, grounding: Grounding, data,
                    model=None, p=DEFAULT_P, p_exists=DEFAULT_P_EXISTS,
                    adjoint=1.0):
    """Degree plus d(degree)/d(predicate row degree) accumulators."""
    value, back, ev = eval_deferred(formula, grounding, data, model, p,
                                    p_exists)
    back(np.asarray(adjoint))
    return value, ev.seeds


def sat(kb: KnowledgeBase, grounding: Grounding, data,
        model: Network | None = None, epoch=None) -> SatReport:
    """Weighted p-mean of per-formula degrees (weights normalized)."""
    if not kb.formulas:
        raise ValidationError("knowledge base is empty")
    weights = np.array([w for _, w in kb.formulas], dtype=np.float64)
    if weights.sum() == 0:
        raise ValidationError("at least one formula weight must be > 0")
    weights = weights / weights.sum()
    degrees = [
        eval_formula(f, grounding, data, model, kb.p, kb.p_exists)
        for f, _ in kb.formulas
    ]
    values = np.asarray(degrees)
    if kb.p < 0:
        values = np.maximum(values, ZERO_CLAMP)
    aggregate = float((weights @ (values ** kb.p)) ** (1.0 / kb.p))
    snap = snapshot_id(model) if model is not None else None
    return SatReport(degrees=degrees, aggregate=aggregate, epoch=epoch,
                     snapshot=snap)


def check_grounded(kb: KnowledgeBase, grounding: Grounding):
    missing = set()
    for formula, _ in kb.formulas:
        missing |= predicates_in(formula) - set(grounding.predicates)
    if missing:
        raise ValidationError(f"ungrounded predicates: {sorted(missing)}")
