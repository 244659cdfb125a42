"""Fuzzy first-order formula trees and the line-oriented text syntax.

One formula per line in prefix style, e.g.

    forall x: implies(and(A(x), B(x)), C(x)) @0.5

An optional trailing ``@w`` sets a knowledge-base weight. ``equiv(a, b)``
is sugar for and(implies(a, b), implies(b, a)).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..tensor import ValidationError


class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Const(Term):
    name: str


class Formula:
    pass


@dataclass(frozen=True)
class Pred(Formula):
    name: str
    args: tuple


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class ForAll(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


def equiv(a: Formula, b: Formula) -> Formula:
    return And(Implies(a, b), Implies(b, a))


def free_vars(formula: Formula) -> set:
    if isinstance(formula, Pred):
        return {t.name for t in formula.args if isinstance(t, Var)}
    if isinstance(formula, Not):
        return free_vars(formula.arg)
    if isinstance(formula, (And, Or, Implies)):
        return free_vars(formula.left) | free_vars(formula.right)
    if isinstance(formula, (ForAll, Exists)):
        return free_vars(formula.body) - {formula.var}
    raise ValidationError(f"not a formula node: {formula!r}")


def predicates_in(formula: Formula) -> set:
    if isinstance(formula, Pred):
        return {formula.name}
    if isinstance(formula, Not):
        return predicates_in(formula.arg)
    if isinstance(formula, (And, Or, Implies)):
        return predicates_in(formula.left) | predicates_in(formula.right)
    if isinstance(formula, (ForAll, Exists)):
        return predicates_in(formula.body)
    raise ValidationError(f"not a formula node: {formula!r}")


def format_formula(formula: Formula) -> str:
    if isinstance(formula, Pred):
        args = ", ".join(t.name for t in formula.args)
        return f"{formula.name}({args})"
    if isinstance(formula, Not):
        return f"not({format_formula(formula.arg)})"
    if isinstance(formula, And):
        return (f"and({format_formula(formula.left)}, "
                f"{format_formula(formula.right)})")
    if isinstance(formula, Or):
        return (f"or({format_formula(formula.left)}, "
                f"{format_formula(formula.right)})")
    if isinstance(formula, Implies):
        return (f"implies({format_formula(formula.left)}, "
                f"{format_formula(formula.right)})")
    if isinstance(formula, ForAll):
        return f"forall {formula.var}: {format_formula(formula.body)}"
    if isinstance(formula, Exists):
        return f"exists {formula.var}: {format_formula(formula.body)}"
    raise ValidationError(f"not a formula node: {formula!r}")


class ParseError(ValidationError):
    def __init__(self, message, column):
        super().__init__(f"column {column}: {message}")
        self.column = column


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
                    r"|(?P<punct>[(),:@])"
                    r"|(?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?))")

_CONNECTIVES = {"and": And, "or": Or, "implies": Implies}
_RESERVED = {"and", "or", "implies", "equiv", "not", "forall", "exists"}


class _Tokens:
    def __init__(self, text):
        self.text = text
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                col = len(text) - len(stripped) + 1
                raise ParseError(f"unexpected character {stripped[0]!r}",
                                 col)
            kind = m.lastgroup
            self.items.append((kind, m.group(kind), m.start(kind) + 1))
            pos = m.end()
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self, expect_kind=None, expect_value=None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula",
                             len(self.text) + 1)
        kind, value, col = tok
        if expect_kind and kind != expect_kind:
            raise ParseError(f"expected {expect_kind}, got {value!r}", col)
        if expect_value and value != expect_value:
            raise ParseError(f"expected {expect_value!r}, got {value!r}",
                             col)
        self.pos += 1
        return tok


def _parse_formula(toks: _Tokens) -> Formula:
    kind, value, col = toks.next()
    if kind != "ident":
        raise ParseError(f"expected a formula, got {value!r}", col)
    if value in ("forall", "exists"):
        _, var, vcol = toks.next("ident")
        if var in _RESERVED:
            raise ParseError(f"{var!r} cannot be a variable name", vcol)
        toks.next("punct", ":")
        body = _parse_formula(toks)
        return (ForAll if value == "forall" else Exists)(var, body)
    toks.next("punct", "(")
    if value == "not":
        arg = _parse_formula(toks)
        toks.next("punct", ")")
        return Not(arg)
    if value in _CONNECTIVES or value == "equiv":
        left = _parse_formula(toks)
        toks.next("punct", ",")
        right = _parse_formula(toks)
        toks.next("punct", ")")
        if value == "equiv":
            return equiv(left, right)
        return _CONNECTIVES[value](left, right)
    if value in _RESERVED:
        raise ParseError(f"misplaced connective {value!r}", col)
    # predicate application: terms are variables or constants
    args = []
    while True:
        _, term, tcol = toks.next("ident")
        if term in _RESERVED:
            raise ParseError(f"{term!r} cannot be a term", tcol)
        args.append(term)
        nxt = toks.next("punct")
        if nxt[1] == ")":
            break
        if nxt[1] != ",":
            raise ParseError(f"expected ',' or ')', got {nxt[1]!r}", nxt[2])
    return Pred(value, tuple(Var(a) if a[0].islower() else Const(a)
                             for a in args))


def parse_formula(text: str) -> Formula:
    """Parse one formula (no weight suffix)."""
    toks = _Tokens(text)
    formula = _parse_formula(toks)
    trailing = toks.peek()
    if trailing is not None:
        raise ParseError(f"trailing content {trailing[1]!r}", trailing[2])
    return formula


def parse_kb_line(text: str):
    """Parse ``<formula> [@weight]`` into (formula, weight)."""
    toks = _Tokens(text)
    formula = _parse_formula(toks)
    weight = 1.0
    nxt = toks.peek()
    if nxt is not None:
        if nxt[1] != "@":
            raise ParseError(f"expected '@weight' or end, got {nxt[1]!r}",
                             nxt[2])
        toks.next()
        _, number, ncol = toks.next("number")
        weight = float(number)
        if weight < 0:
            raise ParseError("weights must be >= 0", ncol)
    trailing = toks.peek()
    if trailing is not None:
        raise ParseError(f"trailing content {trailing[1]!r}", trailing[2])
    return formula, weight


def parse_kb(text: str):
    """Parse a knowledge-base file body: one weighted formula per line,
    blank lines and '#' comments skipped."""
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            out.append(parse_kb_line(stripped))
        except ParseError as exc:
            raise ValidationError(f"line {line_no}: {exc}") from None
    return out
