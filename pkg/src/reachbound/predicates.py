"""Predicates over interval boxes: three-valued checks and box pruning.

A predicate is a tree of comparisons joined by and/or.  Interval evaluation
can certify truth, certify falsity, or stay undecided; both certain answers
are sound for every point of the box.  The optional ``delta`` relaxes each
atom outward (a <= b becomes a <= b + delta, equality becomes a thin band of
half-width delta), which is how goal regions are widened before checking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from . import expr as ex
from .intervals import Box, EMPTY, Interval

Pred = Union["Cmp", "And", "Or"]

_CMP_OPS = (">=", "<=", ">", "<", "=")


class PredError(ValueError):
    pass


@dataclass(frozen=True)
class Cmp:
    op: str
    left: ex.Expr
    right: ex.Expr

    def __post_init__(self):
        if self.op not in _CMP_OPS:
            raise PredError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    items: tuple[Pred, ...]


@dataclass(frozen=True)
class Or:
    items: tuple[Pred, ...]


class Tri(enum.Enum):
    FALSE = 0
    TRUE = 1
    MAYBE = 2


def _tri_and(values) -> Tri:
    out = Tri.TRUE
    for v in values:
        if v is Tri.FALSE:
            return Tri.FALSE
        if v is Tri.MAYBE:
            out = Tri.MAYBE
    return out


def _tri_or(values) -> Tri:
    out = Tri.FALSE
    for v in values:
        if v is Tri.TRUE:
            return Tri.TRUE
        if v is Tri.MAYBE:
            out = Tri.MAYBE
    return out


def sat3(p: Pred, box: Box, delta: float = 0.0) -> Tri:
    """Three-valued truth of p over box, atoms relaxed outward by delta."""
    if isinstance(p, And):
        return _tri_and(sat3(q, box, delta) for q in p.items)
    if isinstance(p, Or):
        return _tri_or(sat3(q, box, delta) for q in p.items)
    d = ex.eval_interval(p.left, box) - ex.eval_interval(p.right, box)
    if p.op in ("<=", "<"):
        if d.hi <= delta:
            return Tri.TRUE
        if d.lo > delta:
            return Tri.FALSE
        return Tri.MAYBE
    if p.op in (">=", ">"):
        if d.lo >= -delta:
            return Tri.TRUE
        if d.hi < -delta:
            return Tri.FALSE
        return Tri.MAYBE
    # equality: relaxed set is |left - right| <= delta
    if -delta <= d.lo and d.hi <= delta:
        return Tri.TRUE
    if d.lo > delta or d.hi < -delta:
        return Tri.FALSE
    return Tri.MAYBE


def free_vars(p: Pred) -> set[str]:
    if isinstance(p, (And, Or)):
        out: set[str] = set()
        for q in p.items:
            out |= free_vars(q)
        return out
    return ex.free_vars(p.left) | ex.free_vars(p.right)


def prune(box: Box, p: Pred) -> Box | None:
    """Shrink box to an over-approximation of its subset satisfying p.

    Returns None when the box certainly contains no satisfying point.
    Tightening only happens on atoms with a bare variable on one side;
    anything else is kept whole (still sound).
    """
    if isinstance(p, And):
        cur = box
        for q in p.items:
            nxt = prune(cur, q)
            if nxt is None:
                return None
            cur = nxt
        return cur
    if isinstance(p, Or):
        branches = [prune(box, q) for q in p.items]
        branches = [b for b in branches if b is not None]
        if not branches:
            return None
        out = branches[0]
        for b in branches[1:]:
            out = out.hull(b)
        return out
    if sat3(p, box) is Tri.FALSE:
        return None
    tightened = _prune_atom(box, p.op, p.left, p.right)
    if tightened is None:
        return None
    return _prune_atom(tightened, _flip(p.op), p.right, p.left) or None


def _flip(op: str) -> str:
    return {">=": "<=", "<=": ">=", ">": "<", "<": ">", "=": "="}[op]


def _prune_atom(box: Box, op: str, left: ex.Expr, right: ex.Expr) -> Box | None:
    if not isinstance(left, ex.Var) or left.name not in box:
        return box
    name = left.name
    rhs = ex.eval_interval(right, box)
    cur = box[name]
    if op in ("<=", "<"):
        new = cur.intersect(Interval(-float("inf"), rhs.hi))
    elif op in (">=", ">"):
        new = cur.intersect(Interval(rhs.lo, float("inf")))
    else:
        new = cur.intersect(rhs)
    if new is EMPTY or new.is_empty:
        return None
    return box.with_dim(name, new)


def eval_bool(p: Pred, env: dict[str, float], eq_tol: float = 0.0) -> bool:
    """Point evaluation for the non-validated simulator.

    Equality atoms hold within eq_tol (events are localized separately,
    so the tolerance only absorbs root-finding residue).
    """
    if isinstance(p, And):
        return all(eval_bool(q, env, eq_tol) for q in p.items)
    if isinstance(p, Or):
        return any(eval_bool(q, env, eq_tol) for q in p.items)
    l = ex.eval_float(p.left, env)
    r = ex.eval_float(p.right, env)
    if p.op == "<=":
        return l <= r
    if p.op == "<":
        return l < r
    if p.op == ">=":
        return l >= r
    if p.op == ">":
        return l > r
    return abs(l - r) <= eq_tol


def to_text(p: Pred) -> str:
    if isinstance(p, And):
        return "(and " + " ".join(to_text(q) for q in p.items) + ")"
    if isinstance(p, Or):
        return "(or " + " ".join(to_text(q) for q in p.items) + ")"
    return f"({ex.to_text(p.left)} {p.op} {ex.to_text(p.right)})"
