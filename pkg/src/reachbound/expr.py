"""Arithmetic expression trees shared by the model format and the solvers.

Numeric literals are kept exact: a constant node stores the literal text it
was parsed from plus its value as a ``Fraction``, and is only converted to a
(two-endpoint) double enclosure at evaluation time.  Constant folding during
simplification is likewise exact, so no rounding ever hides in a tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

from .intervals import Box, DomainError, FUNCTIONS, Interval, from_fraction

Expr = Union["Const", "Var", "Neg", "Bin", "Call"]

_BIN_OPS = ("+", "-", "*", "/", "^")
_FN_NAMES = tuple(sorted(set(FUNCTIONS) - {"log"}))


class ExprError(ValueError):
    pass


class UnboundVariable(ExprError):
    pass


@dataclass(frozen=True)
class Const:
    value: Fraction
    text: str | None = None  # literal as written, for exact round-tripping

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: Expr


@dataclass(frozen=True)
class Bin:
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in _BIN_OPS:
            raise ExprError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Call:
    fn: str
    arg: Expr

    def __post_init__(self):
        if self.fn not in FUNCTIONS:
            raise ExprError(f"unknown function {self.fn!r}")


def const(x) -> Const:
    if isinstance(x, str):
        return Const(Fraction(x), x)
    return Const(Fraction(x))


ZERO = const(0)
ONE = const(1)


def _int_exponent(e: Expr) -> int | None:
    if isinstance(e, Const) and e.value.denominator == 1:
        return int(e.value)
    if isinstance(e, Neg):
        inner = _int_exponent(e.arg)
        return None if inner is None else -inner
    return None


# -- evaluation ----------------------------------------------------------


def eval_interval(e: Expr, env: Box) -> Interval:
    """Natural interval extension of e over the box env."""
    if isinstance(e, Const):
        return from_fraction(e.value)
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundVariable(f"variable {e.name!r} not bound")
        return env[e.name]
    if isinstance(e, Neg):
        return -eval_interval(e.arg, env)
    if isinstance(e, Bin):
        if e.op == "^":
            n = _int_exponent(e.right)
            if n is None:
                raise DomainError("non-integer exponent in '^'")
            return eval_interval(e.left, env).pow_int(n)
        l = eval_interval(e.left, env)
        r = eval_interval(e.right, env)
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        if e.op == "*":
            return l * r
        return l / r
    if isinstance(e, Call):
        return FUNCTIONS[e.fn](eval_interval(e.arg, env))
    raise ExprError(f"not an expression node: {e!r}")


_FLOAT_FNS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "ln": math.log,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "abs": abs,
}


def eval_float(e: Expr, env: dict[str, float]) -> float:
    """Plain double evaluation (non-validated paths: simulation, plotting)."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(f"variable {e.name!r} not bound") from None
    if isinstance(e, Neg):
        return -eval_float(e.arg, env)
    if isinstance(e, Bin):
        l = eval_float(e.left, env)
        r = eval_float(e.right, env)
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        if e.op == "*":
            return l * r
        if e.op == "/":
            return l / r
        return l ** r
    if isinstance(e, Call):
        return _FLOAT_FNS[e.fn](eval_float(e.arg, env))
    raise ExprError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, Bin):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        return free_vars(e.arg)
    raise ExprError(f"not an expression node: {e!r}")


def compile_float(e: Expr, var_order: list[str]) -> Callable:
    """Compile to a positional-argument function of floats (or numpy arrays).

    Used by the non-validated simulator where per-call tree walks would
    dominate the run time.  numpy broadcasting works because the generated
    code only uses arithmetic and numpy ufuncs.
    """
    import numpy as _np

    names = {v: f"_a{i}" for i, v in enumerate(var_order)}

    def emit(node: Expr) -> str:
        if isinstance(node, Const):
            return repr(float(node.value))
        if isinstance(node, Var):
            if node.name not in names:
                raise UnboundVariable(f"variable {node.name!r} not bound")
            return names[node.name]
        if isinstance(node, Neg):
            return f"(-{emit(node.arg)})"
        if isinstance(node, Bin):
            op = "**" if node.op == "^" else node.op
            return f"({emit(node.left)} {op} {emit(node.right)})"
        if isinstance(node, Call):
            fn = {"ln": "log", "abs": "abs_"}.get(node.fn, node.fn)
            return f"_np.{fn}({emit(node.arg)})" if fn != "abs_" else f"_np.abs({emit(node.arg)})"
        raise ExprError(f"not an expression node: {node!r}")

    src = f"lambda {', '.join(names[v] for v in var_order)}: {emit(e)}"
    return eval(src, {"_np": _np})  # noqa: S307 - source is generated above


# -- simplification and differentiation -----------------------------------


def _is_const(e: Expr, v=None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def simplify(e: Expr) -> Expr:
    """Light algebraic cleanup with exact constant folding.

    Keeps repeated symbolic differentiation (4th derivatives, Taylor
    coefficients) from blowing up; it is not a CAS and does not reassociate.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        return Call(e.fn, simplify(e.arg))
    assert isinstance(e, Bin)
    l = simplify(e.left)
    r = simplify(e.right)
    op = e.op
    if isinstance(l, Const) and isinstance(r, Const):
        if op == "+":
            return Const(l.value + r.value)
        if op == "-":
            return Const(l.value - r.value)
        if op == "*":
            return Const(l.value * r.value)
        if op == "/" and r.value != 0:
            return Const(l.value / r.value)
        if op == "^":
            n = _int_exponent(r)
            if n is not None and (n >= 0 or l.value != 0):
                return Const(l.value ** n)
    if op == "+":
        if _is_const(l, 0):
            return r
        if _is_const(r, 0):
            return l
        if isinstance(r, Neg):
            return simplify(Bin("-", l, r.arg))
    elif op == "-":
        if _is_const(r, 0):
            return l
        if _is_const(l, 0):
            return simplify(Neg(r))
        if isinstance(r, Neg):
            return simplify(Bin("+", l, r.arg))
    elif op == "*":
        if _is_const(l, 0) or _is_const(r, 0):
            return ZERO
        if _is_const(l, 1):
            return r
        if _is_const(r, 1):
            return l
        if _is_const(l, -1):
            return simplify(Neg(r))
        if _is_const(r, -1):
            return simplify(Neg(l))
        if isinstance(l, Neg) and isinstance(r, Neg):
            return simplify(Bin("*", l.arg, r.arg))
        if isinstance(l, Neg):
            return simplify(Neg(Bin("*", l.arg, r)))
        if isinstance(r, Neg):
            return simplify(Neg(Bin("*", l, r.arg)))
    elif op == "/":
        if _is_const(l, 0):
            return ZERO
        if _is_const(r, 1):
            return l
        if isinstance(l, Neg):
            return simplify(Neg(Bin("/", l.arg, r)))
    elif op == "^":
        n = _int_exponent(r)
        if n == 0:
            return ONE
        if n == 1:
            return l
    return Bin(op, l, r)


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative, simplified."""
    return simplify(_diff(e, var))


def _diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, var))
    if isinstance(e, Bin):
        l, r = e.left, e.right
        dl, dr = _diff(l, var), _diff(r, var)
        if e.op == "+":
            return Bin("+", dl, dr)
        if e.op == "-":
            return Bin("-", dl, dr)
        if e.op == "*":
            return Bin("+", Bin("*", dl, r), Bin("*", l, dr))
        if e.op == "/":
            num = Bin("-", Bin("*", dl, r), Bin("*", l, dr))
            return Bin("/", num, Bin("^", r, const(2)))
        # u^n with constant integer n
        n = _int_exponent(r)
        if n is None:
            raise ExprError("cannot differentiate non-integer power")
        if n == 0:
            return ZERO
        return Bin("*", Bin("*", const(n), Bin("^", l, const(n - 1))), dl)
    if isinstance(e, Call):
        da = _diff(e.arg, var)
        a = e.arg
        if e.fn == "exp":
            outer: Expr = Call("exp", a)
        elif e.fn in ("ln", "log"):
            outer = Bin("/", ONE, a)
        elif e.fn == "sin":
            outer = Call("cos", a)
        elif e.fn == "cos":
            outer = Neg(Call("sin", a))
        elif e.fn == "sqrt":
            outer = Bin("/", ONE, Bin("*", const(2), Call("sqrt", a)))
        else:
            raise ExprError(f"{e.fn} is not differentiable here")
        return Bin("*", outer, da)
    raise ExprError(f"not an expression node: {e!r}")


# -- printing --------------------------------------------------------------


def _prec(e: Expr) -> int:
    if isinstance(e, (Const, Var, Call)):
        return 4
    if isinstance(e, Neg):
        return 3
    return {"^": 3, "*": 2, "/": 2, "+": 1, "-": 1}[e.op]


def to_text(e: Expr) -> str:
    """Render in the model file's infix syntax; literals print verbatim."""
    if isinstance(e, Const):
        if e.text is not None:
            return e.text
        v = e.value
        return str(int(v)) if v.denominator == 1 else f"({v.numerator} / {v.denominator})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"- {inner}"
    if isinstance(e, Bin):
        lt, rt = to_text(e.left), to_text(e.right)
        if _prec(e.left) < _prec(e):
            lt = f"({lt})"
        # right operand needs parens at equal precedence for - / ^
        if _prec(e.right) < _prec(e) or (_prec(e.right) == _prec(e) and e.op in ("-", "/", "^")):
            rt = f"({rt})"
        return f"{lt} {e.op} {rt}"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    raise ExprError(f"not an expression node: {e!r}")
