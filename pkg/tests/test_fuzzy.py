"""Fuzzy semantics, parsing, satisfiability training and the cycle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xattrib import Dense, Network, ValidationError
from xattrib.data import TabularDataset, synth_recidivism
from xattrib.fuzzy import (And, CycleConfig, DataColumn, Exists, ForAll,
                           Grounding, Implies, KnowledgeBase, Not, Or,
                           ParseError, Pred, PredicateHead, Var,
                           eval_formula, format_formula,
                           free_vars, mid_bin_equivalence_constraint,
                           parse_formula, parse_kb, parse_kb_line, pmean,
                           query_groups, revise, sat, t_and, t_implies,
                           t_not, t_or, train_constrained)
from xattrib.models import (accuracy, tabular_classifier, train_classifier)
from xattrib.network import predict_batch

UNIT = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def toy_dataset(columns, labels=None):
    names = sorted(columns)
    rows = np.column_stack([columns[n] for n in names])
    n = rows.shape[0]
    return TabularDataset(
        feature_names=names, rows=rows,
        labels=np.zeros(n) if labels is None else np.asarray(labels),
        kinds=["continuous"] * len(names),
        protected=[False] * len(names),
    )


class TestPmean:
    def test_arithmetic_mean_at_p1(self):
        assert pmean([0.2, 0.8], 1.0) == pytest.approx(0.5)

    def test_large_p_approaches_max(self):
        assert pmean([0.1, 0.9], 1000.0) == pytest.approx(0.9, abs=1e-2)

    def test_constant_inputs_for_any_p(self):
        for p in (-5.0, -1.0, 0.5, 1.0, 2.0, 10.0):
            assert pmean([0.37] * 4, p) == pytest.approx(0.37, rel=1e-9)

    def test_p_zero_rejected(self):
        with pytest.raises(ValidationError):
            pmean([0.5], 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            pmean([], 1.0)

    def test_negative_p_clamps_zeros(self):
        value = pmean([0.0, 0.5], -2.0)
        assert 0.0 <= value <= 0.5

    @given(st.lists(UNIT, min_size=1, max_size=8),
           st.floats(min_value=-8, max_value=8).filter(
               lambda p: abs(p) > 1e-3))
    @settings(max_examples=200, deadline=None)
    def test_bounded_by_min_and_max(self, values, p):
        m = pmean(values, p)
        lo = min(values) if p > 0 else min(max(v, 1e-12) for v in values)
        assert lo - 1e-9 <= m <= max(values) + 1e-9

    @given(st.lists(UNIT, min_size=2, max_size=6), UNIT,
           st.floats(min_value=0.2, max_value=6))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_each_argument(self, values, bump, p):
        base = pmean(values, p)
        values[0] = min(1.0, values[0] + bump)
        assert pmean(values, p) >= base - 1e-12


FORMULA_LEAF = UNIT
CONNECTIVES = [t_and, t_or, t_implies]


def tree_strategy(depth):
    if depth == 0:
        return FORMULA_LEAF
    sub = tree_strategy(depth - 1)
    return st.one_of(
        FORMULA_LEAF,
        st.tuples(st.sampled_from(["and", "or", "implies"]), sub, sub),
        st.tuples(st.just("not"), sub),
    )


def eval_tree(node):
    if isinstance(node, float):
        return node
    if node[0] == "not":
        return t_not(eval_tree(node[1]))
    a, b = eval_tree(node[1]), eval_tree(node[2])
    return {"and": t_and, "or": t_or, "implies": t_implies}[node[0]](a, b)


class TestConnectives:
    @pytest.mark.parametrize("a", [0.0, 1.0])
    @pytest.mark.parametrize("b", [0.0, 1.0])
    def test_classical_truth_tables(self, a, b):
        assert t_and(a, b) == float(bool(a) and bool(b))
        assert t_or(a, b) == float(bool(a) or bool(b))
        assert t_implies(a, b) == float((not a) or bool(b))
        assert t_not(a) == float(not a)

    def test_vacuous_implication(self):
        for b in (0.0, 0.3, 0.9):
            assert t_implies(0.0, b) == 1.0

    @given(tree_strategy(6))
    @settings(max_examples=300, deadline=None)
    def test_range_closure_on_random_trees(self, tree):
        value = eval_tree(tree)
        assert -1e-12 <= value <= 1.0 + 1e-12

    @given(UNIT, UNIT, UNIT)
    @settings(max_examples=200, deadline=None)
    def test_product_tnorm_associative_commutative(self, a, b, c):
        assert abs(t_and(a, b) - t_and(b, a)) <= 1e-12
        assert abs(t_and(t_and(a, b), c) - t_and(a, t_and(b, c))) <= 1e-12

    @given(UNIT, UNIT)
    @settings(max_examples=300, deadline=None)
    def test_de_morgan_duality(self, a, b):
        # product and probabilistic sum are De Morgan duals
        assert abs(t_not(t_and(a, b))
                   - t_or(t_not(a), t_not(b))) <= 1e-12


class TestParser:
    def test_roundtrip_example(self):
        text = "forall x: implies(and(A(x), B(x)), C(x))"
        formula = parse_formula(text)
        assert isinstance(formula, ForAll)
        assert format_formula(formula) == text
        assert free_vars(formula) == set()

    def test_weight_suffix(self):
        formula, weight = parse_kb_line("forall x: A(x) @2.5")
        assert weight == 2.5

    def test_default_weight_is_one(self):
        _, weight = parse_kb_line("forall x: A(x)")
        assert weight == 1.0

    def test_equiv_desugars(self):
        formula = parse_formula("forall x: equiv(A(x), B(x))")
        assert isinstance(formula.body, And)
        assert isinstance(formula.body.left, Implies)

    def test_error_carries_column(self):
        with pytest.raises(ParseError) as err:
            parse_formula("forall x: implies(A(x)")
        assert "column" in str(err.value)

    def test_misplaced_connective(self):
        with pytest.raises(ParseError, match="column"):
            parse_formula("forall x: A(and)")

    def test_kb_multiline_with_comments(self):
        text = "# header\nforall x: A(x) @1\n\nforall y: not(B(y)) @0.5\n"
        kb = parse_kb(text)
        assert len(kb) == 2
        assert kb[1][1] == 0.5

    def test_kb_error_names_line(self):
        with pytest.raises(ValidationError, match="line 2"):
            parse_kb("forall x: A(x)\nforall x: A(x")


def constant_column_data(values):
    values = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
    return toy_dataset(values)


class TestEvalFormula:
    def _grounding(self, data):
        return Grounding(predicates={
            name.upper(): DataColumn(name) for name in data.feature_names
        })

    def test_classical_endpoints(self):
        data = constant_column_data({"a": [1.0], "b": [1.0]})
        g = self._grounding(data)
        x = Var("x")
        for node in (And(Pred("A", (x,)), Pred("B", (x,))),
                     Or(Pred("A", (x,)), Pred("B", (x,))),
                     Implies(Pred("A", (x,)), Pred("B", (x,)))):
            assert eval_formula(ForAll("x", node), g, data) == 1.0

    def test_vacuous_implication_from_false_antecedent(self):
        data = constant_column_data({"a": [0.0], "b": [0.37]})
        g = self._grounding(data)
        formula = ForAll("x", Implies(Pred("A", (Var("x"),)),
                                      Pred("B", (Var("x"),))))
        assert eval_formula(formula, g, data) == 1.0

    def test_forall_constant_aggregation(self):
        data = constant_column_data({"a": [0.5, 0.5]})
        g = self._grounding(data)
        formula = ForAll("x", Pred("A", (Var("x"),)))
        assert eval_formula(formula, g, data, p=2.0) == pytest.approx(0.5)

    def test_exists_leans_toward_max(self):
        data = constant_column_data({"a": [0.1, 0.9]})
        g = self._grounding(data)
        formula = Exists("x", Pred("A", (Var("x"),)))
        value = eval_formula(formula, g, data, p_exists=6.0)
        assert value > pmean([0.1, 0.9], 1.0)

    def test_random_formula_matches_hand_expansion(self, rng):
        a = rng.random(3)
        b = rng.random(3)
        data = constant_column_data({"a": a, "b": b})
        g = self._grounding(data)
        x = Var("x")
        formula = ForAll("x", Implies(And(Pred("A", (x,)), Pred("B", (x,))),
                                      Or(Pred("A", (x,)),
                                         Not(Pred("B", (x,))))))
        inner = 1.0 - a * b + a * b * (a + (1 - b) - a * (1 - b))
        expected = pmean(inner, 2.0)
        assert eval_formula(formula, g, data, p=2.0) == \
            pytest.approx(expected, abs=1e-12)

    def test_unbound_variable_rejected(self):
        data = constant_column_data({"a": [0.5]})
        g = self._grounding(data)
        with pytest.raises(ValidationError, match="free"):
            eval_formula(Pred("A", (Var("x"),)), g, data)

    def test_ungrounded_predicate_rejected(self):
        data = constant_column_data({"a": [0.5]})
        with pytest.raises(ValidationError, match="grounded"):
            eval_formula(ForAll("x", Pred("Zeta", (Var("x"),))),
                         Grounding(), data)

    def test_two_variable_cross_product(self):
        data = constant_column_data({"a": [0.2, 0.6]})
        g = self._grounding(data)
        formula = ForAll("x", ForAll("y", And(Pred("A", (Var("x"),)),
                                              Pred("A", (Var("y"),)))))
        products = [x * y for x in (0.2, 0.6) for y in (0.2, 0.6)]
        assert eval_formula(formula, g, data, p=1.0) == \
            pytest.approx(np.mean(products), abs=1e-12)


class TestSat:
    def test_singleton_kb(self):
        data = constant_column_data({"a": [0.7]})
        g = Grounding(predicates={"A": DataColumn("a")})
        kb = KnowledgeBase([(ForAll("x", Pred("A", (Var("x"),))), 1.0)])
        report = sat(kb, g, data)
        assert report.aggregate == pytest.approx(0.7)

    def test_two_true_formulas(self):
        data = constant_column_data({"a": [1.0], "b": [1.0]})
        g = Grounding(predicates={"A": DataColumn("a"),
                                  "B": DataColumn("b")})
        kb = KnowledgeBase([(ForAll("x", Pred("A", (Var("x"),))), 1.0),
                            (ForAll("x", Pred("B", (Var("x"),))), 1.0)])
        assert sat(kb, g, data).aggregate == 1.0

    def test_equal_weights_p1_mean(self):
        data = constant_column_data({"a": [0.4], "b": [0.6]})
        g = Grounding(predicates={"A": DataColumn("a"),
                                  "B": DataColumn("b")})
        kb = KnowledgeBase([(ForAll("x", Pred("A", (Var("x"),))), 1.0),
                            (ForAll("x", Pred("B", (Var("x"),))), 1.0)],
                           p=1.0)
        assert sat(kb, g, data).aggregate == pytest.approx(0.5)

    def test_all_zero_weights_rejected(self):
        data = constant_column_data({"a": [0.4]})
        g = Grounding(predicates={"A": DataColumn("a")})
        kb = KnowledgeBase([(ForAll("x", Pred("A", (Var("x"),))), 0.0)])
        with pytest.raises(ValidationError):
            sat(kb, g, data)


def label_fit_setup(ds, seed=0):
    pos = np.flatnonzero(ds.labels == 1.0)
    neg = np.flatnonzero(ds.labels == 0.0)
    grounding = Grounding(predicates={"P": PredicateHead()},
                          variables={"xpos": pos, "xneg": neg})
    kb = KnowledgeBase([
        (ForAll("xpos", Pred("P", (Var("xpos"),))), 1.0),
        (ForAll("xneg", Not(Pred("P", (Var("xneg"),)))), 1.0),
    ])
    net = tabular_classifier(ds.rows, seed=seed)
    return net, kb, grounding


def separable_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, 2)) * 2.0
    labels = (rows @ np.array([1.0, -1.5]) > 0).astype(float)
    return toy_dataset({"f0": rows[:, 0], "f1": rows[:, 1]}, labels)


class TestTrainConstrained:
    def test_separable_data_reaches_high_sat(self):
        ds = separable_dataset()
        net, kb, g = label_fit_setup(ds, seed=1)
        result = train_constrained(net, kb, g, ds, epochs=400, lr=2.0,
                                   freeze=(0,))
        assert result.trajectory[-1].aggregate >= 0.95
        assert accuracy(result.net, ds.rows, ds.labels) >= 0.97

    def test_zero_learning_rate_is_noop(self):
        ds = separable_dataset(100)
        net, kb, g = label_fit_setup(ds, seed=2)
        result = train_constrained(net, kb, g, ds, epochs=5, lr=0.0)
        for before, after in zip(net.layers, result.net.layers):
            assert before.weights.tobytes() == after.weights.tobytes()

    def test_same_seed_identical_trajectory(self):
        ds = separable_dataset(150)
        net, kb, g = label_fit_setup(ds, seed=3)
        a = train_constrained(net, kb, g, ds, epochs=20, lr=0.5, seed=7)
        b = train_constrained(net, kb, g, ds, epochs=20, lr=0.5, seed=7)
        assert [r.aggregate for r in a.trajectory] == \
            [r.aggregate for r in b.trajectory]
        assert a.net.layers[-1].weights.tobytes() == \
            b.net.layers[-1].weights.tobytes()

    def test_divergence_aborts_with_last_good(self, monkeypatch):
        # simulate an evaluation blow-up at epoch 3 and check the guard
        # hands back the last finite parameter state
        import xattrib.fuzzy.training as training_mod
        ds = separable_dataset(100)
        net, kb, g = label_fit_setup(ds, seed=4)
        real_eval = training_mod.eval_deferred
        calls = {"n": 0}

        def poisoned(*args, **kwargs):
            calls["n"] += 1
            value, back, ev = real_eval(*args, **kwargs)
            if calls["n"] > 3 * len(kb.formulas):
                value = float("nan")
            return value, back, ev

        monkeypatch.setattr(training_mod, "eval_deferred", poisoned)
        result = train_constrained(net, kb, g, ds, epochs=50, lr=0.5)
        assert result.diverged
        assert len(result.trajectory) == 3
        assert np.all(np.isfinite(result.net.layers[-1].weights))
        # the returned net is the one whose measurement was still finite
        assert training_mod.snapshot_id(result.net) == \
            result.trajectory[-1].snapshot

    def test_reduces_to_plain_classifier_training(self):
        # a pure data-fit knowledge base must match an ordinary binary
        # cross-entropy trainer to within one accuracy point
        ds = separable_dataset(500, seed=5)
        net, kb, g = label_fit_setup(ds, seed=6)
        ltn = train_constrained(net, kb, g, ds, epochs=400, lr=2.0,
                                freeze=(0,))
        plain, _ = train_classifier(net, ds.rows, ds.labels, epochs=400,
                                    lr=2.0, freeze=(0,))
        acc_ltn = accuracy(ltn.net, ds.rows, ds.labels)
        acc_plain = accuracy(plain, ds.rows, ds.labels)
        assert abs(acc_ltn - acc_plain) <= 0.01

    def test_gradient_matches_finite_differences(self):
        # dSat/dtheta from the formula-tree backward pass vs central
        # differences on the aggregate
        ds = separable_dataset(30, seed=8)
        net, kb, g = label_fit_setup(ds, seed=9)
        step = train_constrained(net, kb, g, ds, epochs=1, lr=0.25)
        layer = net.layers[-1]
        trained = step.net.layers[-1]
        analytic_grad = (trained.weights - layer.weights) / 0.25

        def sat_at(delta_w):
            params = [(ly.weights.copy(), ly.bias.copy())
                      for ly in net.layers]
            params[-1] = (params[-1][0] + delta_w, params[-1][1])
            from xattrib.models import rebuild_dense
            return sat(kb, g, ds, rebuild_dense(net, params)).aggregate

        eps = 1e-6
        for j in range(layer.weights.shape[1]):
            bump = np.zeros_like(layer.weights)
            bump[0, j] = eps
            fd = (sat_at(bump) - sat_at(-bump)) / (2 * eps)
            assert analytic_grad[0, j] == pytest.approx(fd, abs=1e-6)


class TestQueryGroups:
    def _trained(self, bias, seed=0):
        ds = synth_recidivism(1500, bias, seed=seed)
        net, kb, g = label_fit_setup(ds, seed=seed)
        net = train_constrained(net, kb, g, ds, epochs=600, lr=1.0,
                                freeze=(0,)).net
        return ds, net

    def test_unbiased_model_equivalence_high_everywhere(self):
        ds, net = self._trained(0.0)
        report = query_groups(net, ds, "protected", 3)
        for b in report.bins:
            assert b.flag is None
            assert b.equivalence >= 0.9

    def test_biased_model_mid_bin_below_extremes(self):
        ds, net = self._trained(1.0)
        report = query_groups(net, ds, "protected", 3)
        mid = report.bins[1].equivalence
        assert mid < report.bins[0].equivalence
        assert mid < report.bins[2].equivalence

    def test_identical_score_distributions_equivalence_one(self):
        # model ignores the protected flag and rows mirror across groups
        rng = np.random.default_rng(0)
        base = rng.normal(size=(40, 1))
        rows = np.vstack([np.column_stack([base[:, 0], np.ones(40)]),
                          np.column_stack([base[:, 0], np.zeros(40)])])
        ds = toy_dataset({"f": rows[:, 0], "protected": rows[:, 1]},
                         np.zeros(80))
        ds.protected[ds.feature_index("protected")] = True
        f_idx = ds.feature_index("f")
        w = np.zeros((1, 2))
        w[0, f_idx] = 2.0
        net = Network([Dense(w, [0.0], "sigmoid")], input_shape=(2,))
        report = query_groups(net, ds, "protected", 4)
        for b in report.bins:
            assert b.equivalence == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_scores_fall_back_to_single_bin(self):
        ds = toy_dataset({"f": np.ones(10),
                          "protected": np.array([1.0] * 5 + [0.0] * 5)})
        net = Network([Dense(np.zeros((1, 2)), [0.3], "sigmoid")],
                      input_shape=(2,))
        report = query_groups(net, ds, "protected", 3)
        assert report.single_bin_fallback
        assert len(report.bins) == 1

    def test_missing_group_bin_flagged(self):
        ds = toy_dataset({"f": np.linspace(0, 1, 12),
                          "protected": np.array([1.0] * 6 + [0.0] * 6)})
        net = Network([Dense(np.array([[8.0, 0.0]]), [-4.0], "sigmoid")],
                      input_shape=(2,))
        report = query_groups(net, ds, "protected", 2)
        flags = [b.flag for b in report.bins]
        assert "missing-group" in flags


class TestRevise:
    def _setup(self, seed=0):
        ds = synth_recidivism(1500, 1.0, seed=seed)
        net, kb, g = label_fit_setup(ds, seed=seed)
        net = train_constrained(net, kb, g, ds, epochs=600, lr=1.0,
                                freeze=(0,)).net
        return ds, net, kb, g

    def test_empty_constraints_zero_epochs_noop(self):
        ds, net, kb, g = self._setup()
        cfg = CycleConfig(epochs=0, freeze=(0,))
        result = revise(net, kb, [], ds, g, cfg)
        before = predict_batch(net, ds.rows)
        after = predict_batch(result.net, ds.rows)
        assert before.tobytes() == after.tobytes()

    def test_fairness_constraint_raises_mid_bin_equivalence(self):
        ds, net, kb, g = self._setup(seed=0)
        constraint, domains = mid_bin_equivalence_constraint(
            net, ds, "protected", 3
        )
        g.variables.update(domains)
        result = revise(net, kb, [constraint], ds, g,
                        CycleConfig(freeze=(0,)))
        gain = (result.groups_after.mid_bin().equivalence
                - result.groups_before.mid_bin().equivalence)
        assert gain >= 0.05
        acc_before = accuracy(net, ds.rows, ds.labels)
        acc_after = accuracy(result.net, ds.rows, ds.labels)
        assert acc_before - acc_after <= 0.05
        assert len(result.snapshots) == 2

    def test_revision_deterministic(self):
        ds, net, kb, g = self._setup(seed=1)
        constraint, domains = mid_bin_equivalence_constraint(
            net, ds, "protected", 3
        )
        g.variables.update(domains)
        cfg = CycleConfig(epochs=20, freeze=(0,), seed=3)
        a = revise(net, kb, [constraint], ds, g, cfg)
        b = revise(net, kb, [constraint], ds, g, cfg)
        assert a.net.layers[-1].weights.tobytes() == \
            b.net.layers[-1].weights.tobytes()
        assert a.sat_after.aggregate == b.sat_after.aggregate
