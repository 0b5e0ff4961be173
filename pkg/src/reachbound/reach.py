"""Built-in bounded reachability decisions over parameter boxes.

Flows are enclosed by an interval Taylor method: each step first finds a
coarse box closed under one Picard iteration (the a-priori enclosure), then
evaluates fixed-order Taylor coefficients with the remainder taken over that
box.  Mode paths up to the jump budget are explored depth-first; a query is
UNSAT only when every path provably misses the delta-widened target, so
UNSAT answers are guarantees about the exact system while DELTA_SAT may be a
false alarm.

Step polynomials are retained, so time windows can be re-evaluated on
sub-intervals: jump crossings and goal windows are localized by recursive
bisection of the step's local time without re-integrating.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING

from . import expr as ex
from . import predicates as pr
from .intervals import Box, Interval, thin

if TYPE_CHECKING:  # pdrh imports this module lazily; avoid a hard cycle
    from .pdrh import HybridModel, Jump, Mode

log = logging.getLogger("reachbound.reach")


class Verdict(enum.Enum):
    UNSAT = "unsat"
    DELTA_SAT = "delta-sat"


class CellClass(enum.Enum):
    ZERO = 0   # goal certainly unreachable anywhere in the cell
    ONE = 1    # goal certainly reached for every point of the cell
    MIXED = 2  # undecided: genuine mixture or a delta-induced false alarm


class FlowExit(enum.Enum):
    TIME_EXHAUSTED = "time-exhausted"
    INVARIANT_VIOLATED = "invariant-violated-certainly"
    GUARD_ENABLED = "guard-certainly-enabled"  # reserved for urgent-jump semantics
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ReachOptions:
    taylor_order: int = 5
    max_step: float = 0.1
    min_step: float = 1e-9
    remainder_tol: float = 1e-12
    refine_depth: int = 20
    max_segments: int = 50_000  # total flow segments per evaluate() call (Zeno guard)


DEFAULT_OPTIONS = ReachOptions()


@dataclass(frozen=True)
class ReachQuery:
    model: "HybridModel"
    init_mode: int
    init_box: Box
    target: tuple[int, pr.Pred]
    k: int
    delta: float

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.k < 0:
            raise ValueError(f"depth k must be >= 0, got {self.k}")


class EnclosureFailure(RuntimeError):
    """Picard validation failed down to the minimum step size."""

    def __init__(self, t: float):
        self.time = t
        super().__init__(f"could not validate an enclosure step at t={t!r}")


# -- Taylor coefficient schemes ---------------------------------------------


@lru_cache(maxsize=256)
def _taylor_scheme(flows: tuple[tuple[str, ex.Expr], ...], order: int):
    """Normalized Taylor coefficient expressions F_1..F_order per variable.

    F_1 = f and F_{i+1} = (sum_u dF_i/du * f_u) / (i+1), so the solution
    satisfies x(t0+s) = sum_i F_i(x(t0)) s^i with remainder F_order over an
    a-priori box.
    """
    names = [v for v, _ in flows]
    fmap = dict(flows)
    levels: list[dict[str, ex.Expr]] = [dict(fmap)]
    for i in range(1, order):
        prev = levels[-1]
        nxt: dict[str, ex.Expr] = {}
        for v in names:
            terms = []
            for u in names:
                du = ex.differentiate(prev[v], u)
                if du != ex.ZERO:
                    terms.append(ex.simplify(ex.Bin("*", du, fmap[u])))
            if not terms:
                nxt[v] = ex.ZERO
            else:
                s = terms[0]
                for t in terms[1:]:
                    s = ex.Bin("+", s, t)
                nxt[v] = ex.simplify(ex.Bin("/", s, ex.const(i + 1)))
        levels.append(nxt)
    return names, levels


@dataclass(frozen=True)
class FlowStep:
    """One validated step: tube(s) = sum_i coeffs[v][i] * s^i for s in [0, h]."""

    t0: float
    h: float
    coeffs: dict[str, tuple[Interval, ...]]

    def window(self, s_lo: float, s_hi: float) -> Box:
        s = Interval(max(0.0, s_lo), min(self.h, s_hi))
        dims = {}
        any_order = len(next(iter(self.coeffs.values())))
        powers = [thin(1.0)]
        for _ in range(any_order - 1):
            powers.append(powers[-1] * s)
        for v, cs in self.coeffs.items():
            acc = cs[0]
            for i in range(1, len(cs)):
                if cs[i].lo == 0.0 == cs[i].hi:
                    continue
                acc = acc + cs[i] * powers[i]
            dims[v] = acc
        return Box(dims)

    @property
    def box(self) -> Box:
        b = getattr(self, "_box_cache", None)
        if b is None:
            b = self.window(0.0, self.h)
            object.__setattr__(self, "_box_cache", b)
        return b


@dataclass
class FlowEnclosure:
    steps: list[FlowStep]
    status: FlowExit
    var_order: list[str]
    fail_time: float | None = None
    range_excursions: list[tuple[str, float]] = field(default_factory=list)

    def box_at(self, t: float) -> Box | None:
        for st in self.steps:
            if st.t0 <= t <= st.t0 + st.h:
                return st.window(t - st.t0, t - st.t0)
        return None

    def final_time(self) -> float:
        if not self.steps:
            return 0.0
        last = self.steps[-1]
        return last.t0 + last.h


def _endpoint_box(step: FlowStep, names: list[str]) -> Box:
    h = thin(step.h)
    dims = {}
    for v in names:
        cs = step.coeffs[v]
        acc = cs[len(cs) - 1]
        for i in range(len(cs) - 2, -1, -1):  # Horner at thin s = h
            acc = acc * h + cs[i]
        dims[v] = acc
    return Box(dims)


def _picard_box(flows: dict[str, ex.Expr], x: Box, h: float, tries: int = 8) -> Box | None:
    """A box W with x + [0,h]*f(W) contained in W, or None."""
    sh = Interval(0.0, h)
    w = x
    for _ in range(tries):
        cand_dims = {}
        for v in x.names():
            g = ex.eval_interval(flows[v], w)
            cand_dims[v] = x[v] + sh * g
        cand = Box(cand_dims)
        if w.contains_box(cand):
            return cand  # x + [0,h]*f(w) landed inside w: certified, tightened
        merged = {}
        for v in x.names():
            u = w[v].hull(cand[v])
            pad = 0.1 * u.width() + 1e-13 * (1.0 + abs(u.mid()))
            merged[v] = u.widened(pad)
        w = Box(merged)
    return None


def ode_enclose(
    flows: dict[str, ex.Expr],
    init: Box,
    horizon: Interval,
    invariant: pr.Pred | None = None,
    ranges: dict[str, Interval] | None = None,
    options: ReachOptions = DEFAULT_OPTIONS,
) -> FlowEnclosure:
    """Time-segmented tube containing every solution from the initial box.

    Stops at the horizon, at certain invariant violation (no trajectory can
    still be flowing), or when step validation fails (reported, never
    silently ignored).  Declared ranges are not clipped; excursions beyond
    them are recorded.
    """
    names = list(init.names())
    order = max(2, options.taylor_order)
    flow_key = tuple(sorted(flows.items(), key=lambda kv: kv[0]))
    _, levels = _taylor_scheme(flow_key, order)

    t_end = horizon.hi
    steps: list[FlowStep] = []
    excursions: list[tuple[str, float]] = []
    if t_end <= 0.0:
        return FlowEnclosure([FlowStep(0.0, 0.0, {v: (init[v],) for v in names})],
                             FlowExit.TIME_EXHAUSTED, names)

    x = init
    t = 0.0
    h = min(options.max_step, t_end)
    status = FlowExit.TIME_EXHAUSTED
    while t < t_end:
        h = min(h, t_end - t)
        step = None
        while True:
            w = _picard_box(flows, x, h)
            if w is not None:
                coeffs = _step_coeffs(levels, names, x, w, order)
                rem = _remainder_scale(coeffs, names, h, order)
                if rem <= options.remainder_tol or h <= options.min_step * 4:
                    step = FlowStep(t, h, coeffs)
                    break
                shrink = max(0.3, min(0.9, (options.remainder_tol / rem) ** (1.0 / order) * 0.9))
                h = max(options.min_step, h * shrink)
            else:
                if h <= options.min_step:
                    return FlowEnclosure(steps, FlowExit.INCONCLUSIVE, names, fail_time=t,
                                         range_excursions=excursions)
                h = max(options.min_step, h * 0.5)
        steps.append(step)
        seg_box = step.box
        if ranges:
            for v, rng in ranges.items():
                if v in seg_box and not rng.contains_interval(seg_box[v]):
                    if len(excursions) < 16:
                        excursions.append((v, t))
        if invariant is not None and pr.sat3(invariant, seg_box) is pr.Tri.FALSE:
            status = FlowExit.INVARIANT_VIOLATED
            break
        x = _endpoint_box(step, names)
        t = t + step.h
        rem = _remainder_scale(step.coeffs, names, step.h, order)
        if rem < 0.25 * options.remainder_tol:
            h = min(options.max_step, step.h * 1.4)
        else:
            h = step.h
    return FlowEnclosure(steps, status, names, range_excursions=excursions)


def _step_coeffs(levels, names, x: Box, w: Box, order: int) -> dict[str, tuple[Interval, ...]]:
    out: dict[str, list[Interval]] = {v: [x[v]] for v in names}
    for i in range(order - 1):
        for v in names:
            out[v].append(ex.eval_interval(levels[i][v], x))
    for v in names:  # remainder coefficient over the a-priori box
        out[v].append(ex.eval_interval(levels[order - 1][v], w))
    return {v: tuple(cs) for v, cs in out.items()}


def _remainder_scale(coeffs, names, h: float, order: int) -> float:
    hp = Interval(0.0, h).pow_int(order)
    worst = 0.0
    for v in names:
        c = coeffs[v][order]
        contrib = (hp * c).width() / max(1.0, abs(coeffs[v][0].mid()))
        worst = max(worst, contrib)
    return worst


# -- three-valued window analysis -------------------------------------------


def _target_possible(step: FlowStep, s_lo: float, s_hi: float, target: pr.Pred,
                     invariant: pr.Pred | None, delta: float, depth: int) -> bool:
    """Can the delta-widened target intersect reachable states in this window?"""
    box = step.window(s_lo, s_hi)
    if invariant is not None and pr.sat3(invariant, box) is pr.Tri.FALSE:
        return False
    st = pr.sat3(target, box, delta)
    if st is pr.Tri.FALSE:
        return False
    if st is pr.Tri.TRUE or depth <= 0:
        return True
    mid = 0.5 * (s_lo + s_hi)
    return (_target_possible(step, s_lo, mid, target, invariant, delta, depth - 1)
            or _target_possible(step, mid, s_hi, target, invariant, delta, depth - 1))


def _window_excluded(step: FlowStep, s_lo: float, s_hi: float, guard: pr.Pred,
                     invariant: pr.Pred | None) -> bool:
    box = step.window(s_lo, s_hi)
    if pr.sat3(guard, box) is pr.Tri.FALSE:
        return True
    if invariant is not None and pr.sat3(invariant, box) is pr.Tri.FALSE:
        return True
    return False


def _low_edge(step, s_lo, s_hi, guard, invariant, depth) -> float | None:
    """Conservative lower bound on non-excluded local times in the window."""
    if _window_excluded(step, s_lo, s_hi, guard, invariant):
        return None
    if depth <= 0:
        return s_lo
    mid = 0.5 * (s_lo + s_hi)
    left = _low_edge(step, s_lo, mid, guard, invariant, depth - 1)
    if left is not None:
        return left
    return _low_edge(step, mid, s_hi, guard, invariant, depth - 1)


def _high_edge(step, s_lo, s_hi, guard, invariant, depth) -> float | None:
    if _window_excluded(step, s_lo, s_hi, guard, invariant):
        return None
    if depth <= 0:
        return s_hi
    mid = 0.5 * (s_lo + s_hi)
    right = _high_edge(step, mid, s_hi, guard, invariant, depth - 1)
    if right is not None:
        return right
    return _high_edge(step, s_lo, mid, guard, invariant, depth - 1)


# -- the decision procedure ---------------------------------------------------


def evaluate(q: ReachQuery, options: ReachOptions = DEFAULT_OPTIONS) -> Verdict:
    """UNSAT iff no point of the initial box can reach the widened target.

    Depth-first over mode paths with at most k jumps.  Any failure to
    enclose or refine is resolved toward DELTA_SAT, never toward UNSAT.
    """
    model = q.model
    t_hi = model.time_range().hi
    horizon = Interval(0.0, t_hi)
    ranges = {v: model.range_of(v) for v in model.state_vars()}
    target_mode, target_pred = q.target

    segments_used = 0
    jobs: list[tuple[int, Box, int]] = [(q.init_mode, q.init_box, q.k)]
    while jobs:
        mode_id, box, jumps_left = jobs.pop()
        mode = model.mode_by_id(mode_id)
        inv = mode.invariant() if mode.invariants else None
        entry = pr.prune(box, inv) if inv is not None else box
        if entry is None:
            continue
        flow = ode_enclose(mode.flow_map(), entry, horizon, invariant=inv,
                           ranges=ranges, options=options)
        if flow.status is FlowExit.INCONCLUSIVE:
            log.warning("enclosure step failed in mode %d at t=%s; conceding delta-sat",
                        mode_id, flow.fail_time)
            return Verdict.DELTA_SAT
        for v, t in flow.range_excursions:
            log.debug("mode %d: tube for %s leaves its declared range near t=%.6g", mode_id, v, t)
        segments_used += len(flow.steps)
        if segments_used > options.max_segments:
            log.warning("segment budget exhausted (%d); conceding delta-sat", segments_used)
            return Verdict.DELTA_SAT

        if mode_id == target_mode:
            for step in flow.steps:
                if _target_possible(step, 0.0, step.h, target_pred, inv,
                                    q.delta, options.refine_depth):
                    return Verdict.DELTA_SAT

        if jumps_left <= 0:
            continue
        for jump in mode.jumps:
            succ = _successor(flow, jump, inv, model, options)
            if succ is not None:
                jobs.append((jump.target, succ, jumps_left - 1))
    return Verdict.UNSAT


def _successor(flow: FlowEnclosure, jump: "Jump", invariant: pr.Pred | None,
               model: "HybridModel", options: ReachOptions) -> Box | None:
    """Hull of guard-enabled, invariant-consistent states, with resets applied."""
    hull: Box | None = None
    depth = options.refine_depth
    for step in flow.steps:
        if step.h == 0.0:
            lo, hi = (None, None) if _window_excluded(step, 0.0, 0.0, jump.guard, invariant) \
                else (0.0, 0.0)
        else:
            lo = _low_edge(step, 0.0, step.h, jump.guard, invariant, depth)
            hi = _high_edge(step, 0.0, step.h, jump.guard, invariant, depth) if lo is not None else None
        if lo is None or hi is None:
            continue
        box = step.window(lo, hi)
        if invariant is not None:
            pruned = pr.prune(box, invariant)
            if pruned is None:
                continue
            box = pruned
        pruned = pr.prune(box, jump.guard)
        if pruned is None:
            continue
        hull = pruned if hull is None else hull.hull(pruned)
    if hull is None:
        return None
    reset_map = dict(jump.resets)
    dims = {}
    for v in hull.names():
        dims[v] = ex.eval_interval(reset_map[v], hull) if v in reset_map else hull[v]
    return Box(dims)


def classify(model: "HybridModel", cell: Interval, k: int, delta: float,
             options: ReachOptions = DEFAULT_OPTIONS) -> CellClass:
    """Indicator status of one parameter cell.

    The goal query runs first; the complement query is skipped when the goal
    is already certainly unreachable, mirroring the nested decision order.
    """
    from .pdrh import instantiate

    q_goal, q_comp = instantiate(model, cell, k=k, delta=delta)
    if evaluate(q_goal, options) is Verdict.UNSAT:
        return CellClass.ZERO
    if evaluate(q_comp, options) is Verdict.UNSAT:
        return CellClass.ONE
    return CellClass.MIXED
