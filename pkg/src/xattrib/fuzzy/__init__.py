"""Differentiable fuzzy first-order logic over network heads: formula
language, product-family semantics, satisfiability training and the
query/constrain/retrain revision cycle."""

from .formula import (And, Const, Exists, ForAll, Formula, Implies, Not, Or,
                      ParseError, Pred, Var, equiv, format_formula,
                      free_vars, parse_formula, parse_kb, parse_kb_line,
                      predicates_in)
from .semantics import (DataColumn, Grounding, KnowledgeBase, PredicateHead,
                        SatReport, check_grounded, eval_formula,
                        eval_with_seeds, pmean, sat, snapshot_id, t_and,
                        t_implies, t_not, t_or)
from .training import (BinReport, CycleConfig, GroupReport, RevisionResult,
                       TrainResult, mid_bin_equivalence_constraint,
                       mid_bin_masks, query_groups, revise, shapley_parity,
                       train_constrained)

__all__ = [
    "And", "BinReport", "Const", "CycleConfig", "DataColumn", "Exists",
    "ForAll", "Formula", "GroupReport", "Grounding", "Implies",
    "KnowledgeBase", "Not", "Or", "ParseError", "Pred", "PredicateHead",
    "RevisionResult", "SatReport", "TrainResult", "Var", "check_grounded",
    "equiv", "eval_formula", "eval_with_seeds", "format_formula",
    "free_vars", "mid_bin_equivalence_constraint", "mid_bin_masks",
    "parse_formula", "parse_kb", "parse_kb_line", "pmean", "predicates_in",
    "query_groups", "revise", "sat", "shapley_parity", "snapshot_id",
    "t_and", "t_implies", "t_not", "t_or", "train_constrained",
]
