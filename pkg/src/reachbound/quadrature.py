"""Validated Simpson quadrature and budget-driven domain partitioning.

The single-segment rule is the classic 1/3 Simpson sum with its interval
remainder: the value of the definite integral over [a, b] is contained in

    (b-a)/6 * (F(a) + 4 F(m) + F(b))  -  (b-a)^5/2880 * F4([a, b])

where F and F4 are interval extensions of the density and its 4th derivative
and m is an enclosure of the exact midpoint.  Every operation is performed in
interval arithmetic, so the returned interval is a machine-checked enclosure.

Partitioning bisects recursively until each cell's mass enclosure is narrower
than its proportional share of the budget; the interval sum over the finished
partition is then at most ``budget`` wide and contains the exact integral.
"""

from __future__ import annotations

from dataclasses import dataclass

from .density import Distribution
from .intervals import Interval, IntervalError, isum, thin, _down

_SIX = thin(6.0)
_FOUR = thin(4.0)
_HALF = thin(0.5)
_ERR_DEN = thin(2880.0)


class PrecisionExhausted(ValueError):
    """Budget not reachable before cell widths underflow machine precision."""

    def __init__(self, cell: Interval, budget: float):
        self.cell = cell
        super().__init__(
            f"cannot meet mass-width budget {budget!r} on {cell!r}: "
            "cell is no longer splittable"
        )


@dataclass(frozen=True)
class PartitionCell:
    """A parameter subinterval with a verified enclosure of its density mass."""

    cell: Interval
    mass: Interval


def simpson_enclosure(d: Distribution, seg: Interval) -> Interval:
    """Verified enclosure of the integral of the density over seg."""
    if seg.is_empty:
        raise IntervalError("integral over empty segment")
    if not seg.is_finite():
        raise IntervalError(f"integral over unbounded segment {seg!r}")
    if seg.lo == seg.hi:
        return Interval(0.0, 0.0)
    a = thin(seg.lo)
    b = thin(seg.hi)
    width = b - a
    mid = (a + b) * _HALF  # encloses the exact midpoint
    s = d.pdf_enclosure(a) + _FOUR * d.pdf_enclosure(mid) + d.pdf_enclosure(b)
    rule = width / _SIX * s
    err = width.pow_int(5) / _ERR_DEN * d.d4_enclosure(seg)
    return rule - err


def cell_mass(d: Distribution, seg: Interval) -> Interval:
    """Simpson enclosure clamped to be nonnegative (densities are >= 0)."""
    return simpson_enclosure(d, seg).clamp_nonnegative()


def partition(d: Distribution, domain: Interval, budget: float) -> list[PartitionCell]:
    """Split domain into cells whose mass enclosures meet the width budget.

    Each returned cell satisfies
        width(mass) <= budget * width(cell) / width(domain)
    (thresholds rounded down, so the bound is conservative), hence the
    position-ordered interval sum of all masses is at most ``budget`` wide.
    Cells share endpoints and exactly cover the domain, returned in
    ascending position regardless of evaluation order.
    """
    if not domain.is_finite():
        raise IntervalError(f"cannot partition unbounded domain {domain!r}")
    if budget <= 0.0:
        raise ValueError(f"budget must be positive, got {budget}")
    if domain.lo == domain.hi:
        return [PartitionCell(domain, Interval(0.0, 0.0))]

    inv_domain_w = 1.0 / domain.width()
    done: list[PartitionCell] = []
    stack = [domain]  # LIFO with right half pushed first keeps output sorted
    while stack:
        seg = stack.pop()
        mass = cell_mass(d, seg)
        # conservative threshold: round the cell's budget share downward
        share = _down(_down(budget * _down(seg.hi - seg.lo)) * inv_domain_w)
        if mass.width() <= share:
            done.append(PartitionCell(seg, mass))
            continue
        try:
            left, right = seg.bisect()
        except IntervalError:
            raise PrecisionExhausted(seg, budget) from None
        stack.append(right)
        stack.append(left)
    return done


def refine_cell(d: Distribution, c: PartitionCell) -> tuple[PartitionCell, PartitionCell]:
    """Bisect a cell and re-enclose both halves.

    Because the remainder term scales with width^5, halves always meet the
    budget their parent met, so no further internal splitting is needed.
    """
    left, right = c.cell.bisect()
    return PartitionCell(left, cell_mass(d, left)), PartitionCell(right, cell_mass(d, right))


def total_mass(cells: list[PartitionCell]) -> Interval:
    """Position-ordered interval sum of cell masses (deterministic fold)."""
    ordered = sorted(cells, key=lambda c: (c.cell.lo, c.cell.hi))
    return isum(c.mass for c in ordered)
