"""Parser and printer for the PDRH hybrid-model format.

The accepted grammar (EBNF in docs/pdrh_format.md) covers ``#define``
substitutions, range and random-parameter declarations, mode blocks with
invt/flow/jump sections, and the init/goal/goal_c sections with prefix
and/or predicates and infix comparisons.  ``//`` comments run to end of
line.  Numeric literals survive parsing bit-exactly (see expr.Const).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from . import predicates as pr
from .intervals import Box, Interval, from_fraction

_DIST_KEYWORDS = {"N": "normal", "U": "uniform", "E": "exponential"}


class ParseError(ValueError):
    """Syntax or validation error, carrying line/column when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


# -- model structures -----------------------------------------------------


@dataclass(frozen=True)
class DistributionSpec:
    """Parsed random-parameter declaration, arguments kept exact."""

    kind: str  # normal | uniform | exponential | user
    args: tuple[ex.Expr, ...]  # constants; for user: (pdf expr, lo, hi)

    def arg_fractions(self) -> tuple[Fraction, ...]:
        out = []
        for a in self.args:
            folded = ex.simplify(a)
            if not isinstance(folded, ex.Const):
                raise ParseError("distribution argument is not constant")
            out.append(folded.value)
        return tuple(out)


@dataclass(frozen=True)
class VarDecl:
    """Range declaration ``[lo, hi] name;`` with bit-exact bounds."""

    name: str
    lo: ex.Const
    hi: ex.Const

    def interval(self) -> Interval:
        return Interval(from_fraction(self.lo.value).lo, from_fraction(self.hi.value).hi)


@dataclass(frozen=True)
class Jump:
    guard: pr.Pred
    target: int
    resets: tuple[tuple[str, ex.Expr], ...]  # (variable, new-value expression)


@dataclass(frozen=True)
class Mode:
    id: int
    invariants: tuple[pr.Pred, ...]
    flows: tuple[tuple[str, ex.Expr], ...]  # (variable, d/dt right-hand side)
    jumps: tuple[Jump, ...]

    def flow_map(self) -> dict[str, ex.Expr]:
        return dict(self.flows)

    def invariant(self) -> pr.Pred:
        return pr.And(self.invariants)


@dataclass(frozen=True)
class HybridModel:
    defines: dict[str, str] = field(compare=False)  # informational only
    var_ranges: tuple[VarDecl, ...]  # declared ranges, incl. time
    random_params: tuple[tuple[str, DistributionSpec], ...]
    modes: tuple[Mode, ...]
    init: tuple[int, pr.Pred]
    goal: tuple[int, pr.Pred]
    goal_c: tuple[int, pr.Pred]

    def mode_by_id(self, mid: int) -> Mode:
        for m in self.modes:
            if m.id == mid:
                return m
        raise KeyError(f"mode {mid} not declared")

    def range_of(self, name: str) -> Interval:
        for d in self.var_ranges:
            if d.name == name:
                return d.interval()
        return Interval(-float("inf"), float("inf"))

    def state_vars(self) -> list[str]:
        """Continuous state: every declared variable except time, plus params."""
        out = [d.name for d in self.var_ranges if d.name != "time"]
        out += [n for n, _ in self.random_params if n not in out]
        return out

    def time_range(self) -> Interval:
        for d in self.var_ranges:
            if d.name == "time":
                return d.interval()
        return Interval(0.0, float("inf"))

    def random_param(self) -> tuple[str, DistributionSpec]:
        if len(self.random_params) != 1:
            raise ModelError(
                f"{len(self.random_params)} random parameters declared; "
                "solving currently supports exactly one"
            )
        return self.random_params[0]


class ModelError(ValueError):
    """Semantic violation in an otherwise well-formed model."""


# -- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>//[^\n]*)
  | (?P<define>\#define\b)
  | (?P<ddt>d/dt)
  | (?P<arrow>==>)
  | (?P<cmp><=|>=|<|>|=)
  | (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*'?)
  | (?P<punct>[{}()\[\],;:@+\-*/^])
  | (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # define ddt arrow cmp num id punct eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            tokens.append(Token("nl", "\n", line, col))
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                tokens.append(Token(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


def _apply_defines(tokens: list[Token]) -> tuple[list[Token], dict[str, str]]:
    """Collect #define lines and token-substitute their uses."""
    defines: dict[str, list[Token]] = {}
    body: list[Token] = []
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.kind == "define":
            i += 1
            if i >= len(tokens) or tokens[i].kind != "id":
                raise ParseError("#define requires a name", t.line, t.col)
            name = tokens[i].text
            i += 1
            repl: list[Token] = []
            while i < len(tokens) and tokens[i].kind not in ("nl", "eof"):
                repl.append(tokens[i])
                i += 1
            if not repl:
                raise ParseError(f"#define {name} has no replacement", t.line, t.col)
            defines[name] = repl
        else:
            body.append(t)
            i += 1

    def expand(toks: list[Token], depth: int = 0) -> list[Token]:
        if depth > 16:
            raise ParseError("#define expansion too deep (cycle?)")
        out: list[Token] = []
        hit = False
        for t in toks:
            if t.kind == "id" and t.text in defines:
                hit = True
                out.extend(Token(r.kind, r.text, t.line, t.col) for r in defines[t.text])
            else:
                out.append(t)
        return expand(out, depth + 1) if hit else out

    expanded = [t for t in expand(body) if t.kind != "nl"]
    texts = {k: " ".join(t.text for t in v) for k, v in defines.items()}
    return expanded, texts


# -- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg + (f" (got {t.text!r})" if t.text else " (got end of input)"), t.line, t.col)

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            raise self.fail(f"expected {text or kind!r}")
        return self.next()

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    # expressions ---------------------------------------------------------

    def parse_expr(self) -> ex.Expr:
        node = self.parse_term()
        while self.at("punct", "+") or self.at("punct", "-"):
            op = self.next().text
            node = ex.Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> ex.Expr:
        node = self.parse_factor()
        while self.at("punct", "*") or self.at("punct", "/"):
            op = self.next().text
            node = ex.Bin(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> ex.Expr:
        if self.at("punct", "-"):
            self.next()
            return ex.Neg(self.parse_factor())
        if self.at("punct", "+"):
            self.next()
            return self.parse_factor()
        return self.parse_power()

    def parse_power(self) -> ex.Expr:
        base = self.parse_atom()
        if self.at("punct", "^"):
            self.next()
            return ex.Bin("^", base, self.parse_factor())
        return base

    def parse_atom(self) -> ex.Expr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return ex.Const(Fraction(t.text), t.text)
        if t.kind == "id":
            self.next()
            if t.text in ex._FLOAT_FNS and self.at("punct", "("):
                self.next()
                arg = self.parse_expr()
                self.expect("punct", ")")
                return ex.Call("ln" if t.text == "log" else t.text, arg)
            return ex.Var(t.text)
        if t.kind == "punct" and t.text == "(":
            self.next()
            node = self.parse_expr()
            self.expect("punct", ")")
            return node
        raise self.fail("expected expression")

    # predicates ------------------------------------------------------------

    def parse_pred(self) -> pr.Pred:
        self.expect("punct", "(")
        if self.at("id", "and") or self.at("id", "or"):
            kind = self.next().text
            items = []
            while not self.at("punct", ")"):
                items.append(self.parse_pred())
            self.expect("punct", ")")
            if not items:
                raise self.fail(f"empty ({kind} ...)")
            return pr.And(tuple(items)) if kind == "and" else pr.Or(tuple(items))
        left = self.parse_expr()
        op = self.expect("cmp").text
        right = self.parse_expr()
        self.expect("punct", ")")
        return pr.Cmp(op, left, right)

    # declarations -----------------------------------------------------------

    def parse_range_decl(self) -> VarDecl:
        self.expect("punct", "[")
        lo = self._const_node(self.parse_expr(), "range bound")
        self.expect("punct", ",")
        hi = self._const_node(self.parse_expr(), "range bound")
        self.expect("punct", "]")
        name = self.expect("id").text
        self.expect("punct", ";")
        if hi.value <= lo.value:
            raise ParseError(f"empty range [{lo.value}, {hi.value}] for {name!r}")
        return VarDecl(name, lo, hi)

    def _const_node(self, e: ex.Expr, what: str) -> ex.Const:
        folded = ex.simplify(e)
        if not isinstance(folded, ex.Const):
            raise self.fail(f"{what} must be a numeric constant")
        return folded

    def _const_value(self, e: ex.Expr, what: str) -> Fraction:
        folded = ex.simplify(e)
        if not isinstance(folded, ex.Const):
            raise self.fail(f"{what} must be a numeric constant")
        return folded.value

    def parse_dist_decl(self) -> tuple[str, DistributionSpec]:
        kw = self.expect("id").text
        self.expect("punct", "(")
        args = [self.parse_expr()]
        while self.at("punct", ","):
            self.next()
            args.append(self.parse_expr())
        self.expect("punct", ")")
        name = self.expect("id").text
        self.expect("punct", ";")

        if kw == "pdf":
            if len(args) != 3:
                raise ParseError(f"pdf(...) takes (expression, lo, hi), got {len(args)} arguments")
            lo = self._const_value(args[1], "pdf support bound")
            hi = self._const_value(args[2], "pdf support bound")
            if hi <= lo:
                raise ParseError(f"pdf support [{lo}, {hi}] is empty")
            bad = ex.free_vars(args[0]) - {name}
            if bad:
                raise ParseError(f"pdf expression references {sorted(bad)}; only {name!r} is allowed")
            spec = DistributionSpec("user", (args[0], ex.simplify(args[1]), ex.simplify(args[2])))
            return name, spec

        kind = _DIST_KEYWORDS.get(kw)
        if kind is None:
            raise ParseError(f"unknown distribution keyword {kw!r}")
        vals = [self._const_value(a, "distribution parameter") for a in args]
        if kind == "normal":
            if len(vals) != 2:
                raise ParseError("N(mu, sigma) takes two arguments")
            if vals[1] <= 0:
                raise ParseError(f"N(..., sigma): sigma must be > 0, got {vals[1]}")
        elif kind == "uniform":
            if len(vals) != 2:
                raise ParseError("U(a, b) takes two arguments")
            if vals[1] <= vals[0]:
                raise ParseError(f"U(a, b) requires a < b, got [{vals[0]}, {vals[1]}]")
        else:
            if len(vals) != 1:
                raise ParseError("E(rate) takes one argument")
            if vals[0] <= 0:
                raise ParseError(f"E(rate): rate must be > 0, got {vals[0]}")
        return name, DistributionSpec(kind, tuple(ex.simplify(a) for a in args))

    # modes --------------------------------------------------------------------

    def parse_mode(self) -> Mode:
        self.expect("punct", "{")
        self.expect("id", "mode")
        mid_tok = self.expect("num")
        try:
            mid = int(mid_tok.text)
        except ValueError:
            raise ParseError("mode id must be an integer", mid_tok.line, mid_tok.col) from None
        if mid <= 0:
            raise ParseError(f"mode id must be positive, got {mid}", mid_tok.line, mid_tok.col)
        self.expect("punct", ";")

        self.expect("id", "invt")
        self.expect("punct", ":")
        invts = []
        while self.at("punct", "("):
            invts.append(self.parse_pred())
            self.expect("punct", ";")

        self.expect("id", "flow")
        self.expect("punct", ":")
        flows: list[tuple[str, ex.Expr]] = []
        while self.at("ddt"):
            self.next()
            self.expect("punct", "[")
            var = self.expect("id").text
            self.expect("punct", "]")
            self.expect("cmp", "=")
            rhs = self.parse_expr()
            self.expect("punct", ";")
            flows.append((var, rhs))

        self.expect("id", "jump")
        self.expect("punct", ":")
        jumps = []
        while self.at("punct", "("):
            guard = self.parse_pred()
            self.expect("arrow")
            self.expect("punct", "@")
            target = int(self.expect("num").text)
            reset_pred = self.parse_pred()
            self.expect("punct", ";")
            jumps.append(Jump(guard, target, self._resets_from(reset_pred)))

        self.expect("punct", "}")
        return Mode(mid, tuple(invts), tuple(flows), tuple(jumps))

    def _resets_from(self, p: pr.Pred) -> tuple[tuple[str, ex.Expr], ...]:
        atoms: list[pr.Cmp] = []

        def collect(q: pr.Pred):
            if isinstance(q, pr.And):
                for item in q.items:
                    collect(item)
            elif isinstance(q, pr.Cmp):
                atoms.append(q)
            else:
                raise self.fail("reset must be a conjunction of (var' = expression)")

        collect(p)
        out = []
        for a in atoms:
            if a.op != "=" or not isinstance(a.left, ex.Var) or not a.left.name.endswith("'"):
                raise self.fail("reset must be a conjunction of (var' = expression)")
            rhs_vars = ex.free_vars(a.right)
            primed = [v for v in rhs_vars if v.endswith("'")]
            if primed:
                raise self.fail(f"reset right-hand side references primed {primed[0]!r}")
            out.append((a.left.name[:-1], a.right))
        seen = set()
        for name, _ in out:
            if name in seen:
                raise self.fail(f"variable {name!r} reset twice in one jump")
            seen.add(name)
        return tuple(out)

    def parse_at_pred(self) -> tuple[int, pr.Pred]:
        self.expect("punct", "@")
        mid = int(self.expect("num").text)
        p = self.parse_pred()
        self.expect("punct", ";")
        return mid, p


def parse(text: str) -> HybridModel:
    """Parse PDRH text into a validated HybridModel."""
    tokens, define_texts = _apply_defines(_tokenize(text))
    p = _Parser(tokens)

    var_ranges: list[VarDecl] = []
    random_params: list[tuple[str, DistributionSpec]] = []
    modes: list[Mode] = []
    init = goal = goal_c = None

    while not p.at("eof"):
        if p.at("punct", "["):
            var_ranges.append(p.parse_range_decl())
        elif p.at("punct", "{"):
            modes.append(p.parse_mode())
        elif p.at("id", "init"):
            p.next()
            p.expect("punct", ":")
            init = p.parse_at_pred()
        elif p.at("id", "goal_c"):
            p.next()
            p.expect("punct", ":")
            goal_c = p.parse_at_pred()
        elif p.at("id", "goal"):
            p.next()
            p.expect("punct", ":")
            goal = p.parse_at_pred()
        elif p.at("id"):
            random_params.append(p.parse_dist_decl())
        else:
            raise p.fail("expected declaration, mode block, init, goal or goal_c")

    if not modes:
        raise ParseError("model has no modes")
    if init is None:
        raise ParseError("model has no init section")
    if goal is None:
        raise ParseError("model has no goal section")
    if goal_c is None:
        raise ParseError("model has goal but no goal_c section (both are required)")

    model = HybridModel(
        defines=define_texts,
        var_ranges=tuple(var_ranges),
        random_params=tuple(random_params),
        modes=tuple(modes),
        init=init,
        goal=goal,
        goal_c=goal_c,
    )
    _validate(model)
    return model


def _validate(m: HybridModel) -> None:
    names = [d.name for d in m.var_ranges]
    dups = {n for n in names if names.count(n) > 1}
    if dups:
        raise ModelError(f"variable declared twice: {sorted(dups)}")
    for pname, _ in m.random_params:
        if pname in names:
            raise ModelError(f"random parameter {pname!r} collides with a declared variable")
    pnames = [n for n, _ in m.random_params]
    if len(set(pnames)) != len(pnames):
        raise ModelError("random parameter declared twice")

    ids = [md.id for md in m.modes]
    if len(set(ids)) != len(ids):
        raise ModelError(f"duplicate mode id in {ids}")
    known = set(names) | set(pnames)
    state = set(m.state_vars())

    for md in m.modes:
        fvars = [v for v, _ in md.flows]
        if len(set(fvars)) != len(fvars):
            raise ModelError(f"mode {md.id}: variable has two flow equations")
        missing = state - set(fvars)
        if missing:
            raise ModelError(f"mode {md.id}: no flow equation for {sorted(missing)}")
        extra = set(fvars) - state
        if extra:
            raise ModelError(f"mode {md.id}: flow for undeclared variable {sorted(extra)}")
        for v, rhs in md.flows:
            bad = ex.free_vars(rhs) - known
            if bad:
                raise ModelError(f"mode {md.id}: d/dt[{v}] references undeclared {sorted(bad)}")
        for inv in md.invariants:
            bad = pr.free_vars(inv) - known
            if bad:
                raise ModelError(f"mode {md.id}: invariant references undeclared {sorted(bad)}")
        for j in md.jumps:
            if j.target not in ids:
                raise ModelError(f"mode {md.id}: jump targets undeclared mode {j.target}")
            bad = pr.free_vars(j.guard) - known
            if bad:
                raise ModelError(f"mode {md.id}: guard references undeclared {sorted(bad)}")
            for v, rhs in j.resets:
                if v not in state:
                    raise ModelError(f"mode {md.id}: reset of undeclared variable {v!r}")
                bad = ex.free_vars(rhs) - known
                if bad:
                    raise ModelError(f"mode {md.id}: reset references undeclared {sorted(bad)}")

    for what, (mid, pred) in (("init", m.init), ("goal", m.goal), ("goal_c", m.goal_c)):
        if mid not in ids:
            raise ModelError(f"{what} references undeclared mode {mid}")
        bad = pr.free_vars(pred) - known
        if bad:
            raise ModelError(f"{what} references undeclared {sorted(bad)}")


# -- extraction and instantiation -------------------------------------------


def extract_random(model: HybridModel) -> tuple[str, DistributionSpec]:
    """The single random parameter (name, distribution) of the model."""
    return model.random_param()


def init_region(model: HybridModel) -> Box:
    """Initial state box: declared ranges pruned by the init predicate.

    The random parameter starts unbounded here; instantiate() pins it.
    """
    inf = float("inf")
    dims = {}
    for name in model.state_vars():
        dims[name] = model.range_of(name)
    for pname, _ in model.random_params:
        dims[pname] = Interval(-inf, inf)
    box = Box(dims)
    pruned = pr.prune(box, model.init[1])
    if pruned is None:
        raise ModelError("init predicate is unsatisfiable within declared ranges")
    return pruned


def instantiate(model: HybridModel, cell: Interval, k: int = 0, delta: float = 1e-3):
    """Build the goal query and the complement-goal query for one cell.

    Both queries share the init region with the random parameter pinned to
    ``cell``; they differ only in the reach target.  Purely in-memory; the
    shared model is never copied or mutated.
    """
    from .reach import ReachQuery  # local import: reach depends on this module's types

    pname, _ = model.random_param()
    base = init_region(model)
    pinned = base.with_dim(pname, base[pname].intersect(cell))
    if pinned[pname].is_empty:
        raise ModelError(f"cell {cell!r} is outside the initial region of {pname!r}")
    q_goal = ReachQuery(model=model, init_mode=model.init[0], init_box=pinned,
                        target=model.goal, k=k, delta=delta)
    q_comp = ReachQuery(model=model, init_mode=model.init[0], init_box=pinned,
                        target=model.goal_c, k=k, delta=delta)
    return q_goal, q_comp


# -- canonical printer --------------------------------------------------------


def print_model(m: HybridModel) -> str:
    """Normalized PDRH text; parse(print_model(parse(s))) == parse(s)."""
    out: list[str] = []
    for d in m.var_ranges:
        out.append(f"[{ex.to_text(d.lo)}, {ex.to_text(d.hi)}] {d.name};")
    for name, spec in m.random_params:
        if spec.kind == "user":
            pdf_e, lo, hi = spec.args
            out.append(f"pdf({ex.to_text(pdf_e)}, {ex.to_text(lo)}, {ex.to_text(hi)}) {name};")
        else:
            kw = {v: k for k, v in _DIST_KEYWORDS.items()}[spec.kind]
            args = ", ".join(ex.to_text(a) for a in spec.args)
            out.append(f"{kw}({args}) {name};")
    for md in m.modes:
        out.append("{ mode " + str(md.id) + ";")
        out.append("invt:")
        for inv in md.invariants:
            out.append(pr.to_text(inv) + ";")
        out.append("flow:")
        for v, rhs in md.flows:
            out.append(f"d/dt[{v}] = {ex.to_text(rhs)};")
        out.append("jump:")
        for j in md.jumps:
            resets = " ".join(f"({v}' = {ex.to_text(rhs)})" for v, rhs in j.resets)
            out.append(f"{pr.to_text(j.guard)} ==> @{j.target} (and {resets});")
        out.append("}")
    for label, (mid, pred) in (("init", m.init), ("goal", m.goal), ("goal_c", m.goal_c)):
        out.append(f"{label}:")
        out.append(f"@{mid} {pr.to_text(pred)};")
    return "\n".join(out) + "\n"
