"""End-to-end probability enclosure computation.

The driver splits the precision target between the tail bound and the
integration/classification work (eps_inf = t*eps, eps_prob = (1-t)*eps),
partitions the bounded parameter domain, classifies each cell through the
reachability engine, and accumulates certain mass into the lower and upper
probability bounds.  Undecided cells are bisected round by round; when a
cell gets so narrow that further splitting cannot help against a too-coarse
delta it is re-classified with the next smaller delta from the schedule.
Mass never leaks: whatever stays undecided is charged to the reported upper
bound, and the tail outside the bounded domain is charged there as well, so
every intermediate and final interval is a sound enclosure of the exact
reachability probability.

Worker scheduling changes only *when* classifications run, never their
outcome or the order results are folded in, so the final enclosure is
bit-identical for any worker count.  The optional ``idle_split`` heuristic
(pre-bisecting pending cells until every worker has a task) does alter the
refinement tree and is therefore off by default.
"""

from __future__ import annotations

import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .density import Distribution, make_distribution
from .intervals import Interval, isum
from .pdrh import HybridModel
from .quadrature import PartitionCell, partition, refine_cell, total_mass
from .reach import CellClass, DEFAULT_OPTIONS, ReachOptions, classify

_ONE = Interval(1.0, 1.0)

# A cell whose width falls below _KAPPA * current-delta is presumed stuck on
# a delta-induced false alarm: escalate delta before splitting further.
_KAPPA = 8.0


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-3          # target width of the final enclosure
    t_split: float = 0.5           # tail/integration budget split in (0,1)
    k: int = 0                     # jump depth
    delta: float = 1e-3            # initial decision precision
    workers: int = 1
    timeout: float | None = None   # wall-clock seconds
    min_cell_width: float | None = None          # None: auto from epsilon
    delta_schedule: tuple[float, ...] | None = None  # None: auto geometric
    idle_split: bool = False
    reach: ReachOptions = DEFAULT_OPTIONS

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise SolverError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not (0.0 < self.t_split < 1.0):
            raise SolverError(f"t_split must be in (0, 1), got {self.t_split}")
        if self.delta <= 0.0:
            raise SolverError(f"delta must be > 0, got {self.delta}")
        if self.workers < 1:
            raise SolverError(f"workers must be >= 1, got {self.workers}")
        if self.k < 0:
            raise SolverError(f"k must be >= 0, got {self.k}")
        if self.delta_schedule is not None:
            ds = self.delta_schedule
            if not ds or any(b >= a for a, b in zip(ds, ds[1:])):
                raise SolverError("delta_schedule must be strictly decreasing")

    @property
    def epsilon_inf(self) -> float:
        return self.t_split * self.epsilon

    @property
    def epsilon_prob(self) -> float:
        return (1.0 - self.t_split) * self.epsilon

    def schedule(self) -> tuple[float, ...]:
        if self.delta_schedule is not None:
            return self.delta_schedule
        floor = max(1e-13, self.epsilon_prob * 1e-3)
        out = [self.delta]
        while out[-1] > floor:
            out.append(max(floor, out[-1] / 10.0))
        return tuple(out)


@dataclass(frozen=True)
class ProgressEvent:
    elapsed_seconds: float
    p_lower: float
    p_upper: float
    cells_done: int
    cells_pending: int


@dataclass(frozen=True)
class ProbabilityEnclosure:
    p_lower: Interval      # accumulated certainly-reaching mass
    p_upper: Interval      # complement bookkeeping incl. tail leftovers
    complete: bool         # final width met the epsilon contract
    stuck_cells: tuple[Interval, ...] = ()

    @property
    def reported(self) -> Interval:
        return Interval(self.p_lower.lo, self.p_upper.hi)


@dataclass
class _WorkItem:
    cell: PartitionCell
    delta_idx: int


@dataclass
class _State:
    sum_one: Interval
    sum_zero: Interval
    total: Interval        # verified integral over the bounded domain
    pending: list[_WorkItem]
    stuck: list[_WorkItem]
    done: int = 0
    cap_hi: float = 1.0    # monotone-narrowing enforcement
    floor_lo: float = 0.0

    def pending_mass(self) -> Interval:
        items = sorted(self.pending + self.stuck, key=lambda w: w.cell.cell.lo)
        return isum(w.cell.mass for w in items)

    def bounds(self) -> tuple[float, float]:
        """Sound anytime enclosure of the exact probability."""
        upper_alg = (_ONE - self.sum_zero) + (_ONE - self.total)
        upper_dec = self.sum_one + self.pending_mass() + (_ONE - self.total)
        hi = min(upper_alg.hi, upper_dec.hi, 1.0, self.cap_hi)
        lo = max(0.0, self.sum_one.lo, self.floor_lo)
        self.cap_hi = hi
        self.floor_lo = lo
        return lo, hi

    def loop_gap(self) -> float:
        # classification-loop measure: upper (before leftovers) minus lower
        return (_ONE - self.sum_zero).hi - self.sum_one.lo


def schedule(dist: Distribution, model: HybridModel, items: list[_WorkItem],
             workers: int, deltas: tuple[float, ...], options: ReachOptions,
             k: int, min_width: float, idle_split: bool,
             ) -> list[tuple[_WorkItem, CellClass]]:
    """Classify one round of cells with up to ``workers`` concurrent workers.

    Results are returned in cell-position order regardless of completion
    order.  With ``idle_split`` enabled, cells are pre-bisected (widest
    first) until there is one per worker or the width floor stops further
    splitting; this reproduces the idle-reduction heuristic but changes the
    refinement tree, so it is opt-in.
    """
    items = sorted(items, key=lambda w: w.cell.cell.lo)
    if idle_split:
        while 0 < len(items) < workers:
            pos = max(range(len(items)),
                      key=lambda i: (items[i].cell.cell.width(), -items[i].cell.cell.lo))
            widest = items[pos]
            if widest.cell.cell.width() <= min_width:
                break
            try:
                left, right = refine_cell(dist, widest.cell)
            except Exception:
                break
            items[pos:pos + 1] = [_WorkItem(left, widest.delta_idx),
                                  _WorkItem(right, widest.delta_idx)]

    def run(item: _WorkItem) -> CellClass:
        return classify(model, item.cell.cell, k, deltas[item.delta_idx], options)

    if workers <= 1 or len(items) <= 1:
        return [(it, run(it)) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, it) for it in items]
        return [(it, f.result()) for it, f in zip(items, futures)]


def solve(model: HybridModel, cfg: SolverConfig, progress=None) -> ProbabilityEnclosure:
    """Compute a guaranteed enclosure of the reachability probability.

    On normal termination the enclosure is at most ``cfg.epsilon`` wide.  On
    timeout or when undecidable cells remain at the smallest delta and cell
    width, the enclosure is still sound, just wider, and ``complete`` is
    False.  ``progress`` (if given) receives a ProgressEvent whenever the
    reported bounds change.
    """
    pname, spec = model.random_param()
    dist = make_distribution(pname, spec)
    start = _time.monotonic()

    domain = dist.tail_bounds(cfg.epsilon_inf)
    cells = partition(dist, domain, cfg.epsilon_prob)
    deltas = cfg.schedule()
    min_width = cfg.min_cell_width
    if min_width is None:
        min_width = max(domain.width() * 2**-46, cfg.epsilon_prob * domain.width() / 16.0)

    st = _State(
        sum_one=Interval(0.0, 0.0),
        sum_zero=Interval(0.0, 0.0),
        total=total_mass(cells),
        pending=[_WorkItem(c, 0) for c in cells],
        stuck=[],
    )

    last_emit: tuple[float, float] | None = None

    def emit() -> None:
        nonlocal last_emit
        lo, hi = st.bounds()
        if progress is not None and (lo, hi) != last_emit:
            progress(ProgressEvent(
                elapsed_seconds=_time.monotonic() - start,
                p_lower=lo, p_upper=hi,
                cells_done=st.done,
                cells_pending=len(st.pending) + len(st.stuck),
            ))
        last_emit = (lo, hi)

    emit()
    timed_out = False
    while st.loop_gap() > cfg.epsilon_prob and st.pending:
        if cfg.timeout is not None and _time.monotonic() - start > cfg.timeout:
            timed_out = True
            break
        round_items, st.pending = st.pending, []
        results = schedule(dist, model, round_items, cfg.workers, deltas,
                           cfg.reach, cfg.k, min_width, cfg.idle_split)
        remaining = [it for it, _ in results]
        next_round: list[_WorkItem] = []
        for item, verdict in results:
            remaining.pop(0)
            st.done += 1
            changed = True
            if verdict is CellClass.ONE:
                st.sum_one = st.sum_one + item.cell.mass
            elif verdict is CellClass.ZERO:
                st.sum_zero = st.sum_zero + item.cell.mass
            else:
                next_round.extend(_refine(dist, item, deltas, min_width, st))
                changed = False
            if changed:
                # unprocessed cells of this round still count as pending mass
                st.pending = remaining + next_round
                emit()
        st.pending = next_round
        emit()
    emit()

    lo, hi = st.bounds()
    p_lower = st.sum_one
    upper_alg = (_ONE - st.sum_zero) + (_ONE - st.total)
    p_upper = Interval(min(upper_alg.lo, hi), hi)
    width = Interval(lo, hi).width()
    return ProbabilityEnclosure(
        p_lower=p_lower,
        p_upper=p_upper,
        complete=(not timed_out) and width <= cfg.epsilon,
        stuck_cells=tuple(w.cell.cell for w in st.stuck),
    )


def _refine(dist: Distribution, item: _WorkItem, deltas: tuple[float, ...],
            min_width: float, st: _State) -> list[_WorkItem]:
    """Next work for a mixed cell: bisect, escalate delta, or park as stuck."""
    w = item.cell.cell.width()
    splittable = w > min_width
    if splittable:
        try:
            item.cell.cell.mid()
        except Exception:
            splittable = False
    if splittable and w > _KAPPA * deltas[item.delta_idx]:
        left, right = refine_cell(dist, item.cell)
        return [_WorkItem(left, item.delta_idx), _WorkItem(right, item.delta_idx)]
    if item.delta_idx + 1 < len(deltas):
        return [_WorkItem(item.cell, item.delta_idx + 1)]
    if splittable:
        left, right = refine_cell(dist, item.cell)
        return [_WorkItem(left, item.delta_idx), _WorkItem(right, item.delta_idx)]
    st.stuck.append(item)
    return []
