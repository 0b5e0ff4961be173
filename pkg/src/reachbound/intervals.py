"""Directed-rounding interval arithmetic on IEEE doubles.

Every operation returns an interval that contains the exact real result for
all points of its inputs.  Outward rounding is obtained by nudging endpoints
with ``math.nextafter`` after each native float operation: native arithmetic
(+ - * /) is correctly rounded, so one ulp outward is sufficient; library
transcendentals are at worst a couple of ulp off on mainstream libms, so
their endpoint images are padded by two ulp.  This keeps the whole module
independent of FPU rounding-mode control and therefore safe to call from any
number of threads.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Iterator

_INF = math.inf


class IntervalError(ValueError):
    """Invalid interval construction or operation."""


class DomainError(IntervalError):
    """Operand outside the mathematical domain of the operation."""


def _down(x: float) -> float:
    """Largest double strictly below x (identity on -inf)."""
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _down2(x: float) -> float:
    return _down(_down(x))


def _up2(x: float) -> float:
    return _up(_up(x))


class Interval:
    """Closed interval [lo, hi] of reals, endpoints finite or infinite.

    Instances are immutable.  ``lo <= hi`` always holds; the empty interval is
    the distinct singleton ``EMPTY`` (never produced by the constructor).
    NaN endpoints are rejected at every construction site.
    """

    __slots__ = ("lo", "hi")

    lo: float
    hi: float

    def __init__(self, lo: float, hi: float):
        lo = float(lo)
        hi = float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise IntervalError("NaN endpoint")
        if lo > hi:
            raise IntervalError(f"inverted endpoints [{lo!r}, {hi!r}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):  # immutability
        raise AttributeError("Interval is immutable")

    # -- basic queries -------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def is_finite(self) -> bool:
        return not self.is_empty and math.isfinite(self.lo) and math.isfinite(self.hi)

    def is_thin(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: float) -> bool:
        return (not self.is_empty) and self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        if self.is_empty or other.is_empty:
            return False
        return self.lo <= other.hi and other.lo <= self.hi

    def __eq__(self, other) -> bool:
        if not isinstance(other, Interval):
            return NotImplemented
        if self.is_empty and other.is_empty:
            return True
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self) -> int:
        return hash((self.lo, self.hi))

    def __repr__(self) -> str:
        if self.is_empty:
            return "Interval.EMPTY"
        return f"[{self.lo!r}, {self.hi!r}]"

    # -- arithmetic ----------------------------------------------------

    def _require(self, other: "Interval") -> None:
        if self.is_empty or other.is_empty:
            raise IntervalError("arithmetic on empty interval")

    def __add__(self, other: "Interval") -> "Interval":
        self._require(other)
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def __sub__(self, other: "Interval") -> "Interval":
        self._require(other)
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def __neg__(self) -> "Interval":
        if self.is_empty:
            raise IntervalError("arithmetic on empty interval")
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        self._require(other)
        # 0 * inf is indeterminate under IEEE; treat it as 0 (exact bound
        # for the product of a zero endpoint with any magnitude).
        cands = []
        for a in (self.lo, self.hi):
            for b in (other.lo, other.hi):
                if (a == 0.0 and math.isinf(b)) or (b == 0.0 and math.isinf(a)):
                    cands.append(0.0)
                else:
                    cands.append(a * b)
        return Interval(_down(min(cands)), _up(max(cands)))

    def __truediv__(self, other: "Interval") -> "Interval":
        self._require(other)
        if other.lo <= 0.0 <= other.hi:
            raise DomainError(f"division by interval containing zero: {other!r}")
        cands = [a / b for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Interval(_down(min(cands)), _up(max(cands)))

    def pow_int(self, n: int) -> "Interval":
        """x**n for integer n, with proper even-power range handling."""
        if self.is_empty:
            raise IntervalError("arithmetic on empty interval")
        if n == 0:
            return Interval(1.0, 1.0)
        if n < 0:
            return Interval(1.0, 1.0) / self.pow_int(-n)
        if n % 2 == 1 or self.lo >= 0.0:
            return Interval(_down2(_fpow(self.lo, n)), _up2(_fpow(self.hi, n)))
        if self.hi <= 0.0:
            return Interval(_down2(_fpow(self.hi, n)), _up2(_fpow(self.lo, n)))
        # even power straddling zero: range is [0, max(|lo|, hi)**n]
        m = max(-self.lo, self.hi)
        return Interval(0.0, _up2(_fpow(m, n)))

    # -- geometry ------------------------------------------------------

    def width(self) -> float:
        """Upper bound on hi - lo (rounded outward, so never understated)."""
        if self.is_empty:
            return 0.0
        if self.lo == self.hi:
            return 0.0
        w = self.hi - self.lo
        return w if math.isinf(w) else _up(w)

    def mid(self) -> float:
        if self.is_empty:
            raise IntervalError("mid of empty interval")
        if not self.is_finite():
            raise IntervalError("mid of unbounded interval")
        m = 0.5 * (self.lo + self.hi)
        if math.isinf(m):  # overflow on huge endpoints
            m = self.lo + 0.5 * (self.hi - self.lo)
        return min(max(m, self.lo), self.hi)

    def bisect(self) -> tuple["Interval", "Interval"]:
        m = self.mid()
        if m <= self.lo or m >= self.hi:
            raise IntervalError(f"cannot split degenerate interval {self!r}")
        return Interval(self.lo, m), Interval(m, self.hi)

    def intersect(self, other: "Interval") -> "Interval":
        if not self.intersects(other):
            return EMPTY
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def hull(self, other: "Interval") -> "Interval":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def widened(self, margin: float) -> "Interval":
        if self.is_empty:
            raise IntervalError("widen of empty interval")
        return Interval(_down(self.lo - margin), _up(self.hi + margin))

    def clamp_nonnegative(self) -> "Interval":
        """Tighten lo up to 0 (used for quantities known to be >= 0)."""
        if self.is_empty or self.lo >= 0.0:
            return self
        if self.hi < 0.0:
            return Interval(0.0, 0.0)
        return Interval(0.0, self.hi)


def _fpow(x: float, n: int) -> float:
    try:
        return math.pow(x, n)
    except OverflowError:
        return math.copysign(_INF, x) if n % 2 else _INF


def _make_empty() -> Interval:
    iv = object.__new__(Interval)
    object.__setattr__(iv, "lo", _INF)
    object.__setattr__(iv, "hi", -_INF)
    return iv


EMPTY = _make_empty()

ENTIRE = Interval(-_INF, _INF)


def thin(x: float) -> Interval:
    return Interval(x, x)


def from_fraction(q: Fraction) -> Interval:
    """Tightest double enclosure of an exact rational."""
    d = float(q)
    if math.isinf(d):
        return Interval(math.nextafter(_INF, 0.0), _INF) if d > 0 else Interval(-_INF, math.nextafter(-_INF, 0.0))
    fd = Fraction(d)
    if fd == q:
        return Interval(d, d)
    if fd < q:
        return Interval(d, _up(d))
    return Interval(_down(d), d)


# Constant enclosures: math.pi is the nearest double below pi.
PI = Interval(math.pi, _up(math.pi))
TWO_PI = PI + PI
HALF_PI = PI / thin(2.0)


# -- elementary function extensions -------------------------------------


def iexp(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("exp of empty interval")
    try:
        lo = _down2(math.exp(x.lo)) if math.isfinite(x.lo) else 0.0
    except OverflowError:
        lo = math.nextafter(_INF, 0.0)
    try:
        hi = _up2(math.exp(x.hi)) if math.isfinite(x.hi) else (_INF if x.hi > 0 else 0.0)
    except OverflowError:
        hi = _INF
    return Interval(max(lo, 0.0), hi)


def iln(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("ln of empty interval")
    if x.lo < 0.0:
        raise DomainError(f"ln of interval reaching below zero: {x!r}")
    if x.hi <= 0.0:
        raise DomainError("ln of nonpositive interval")
    lo = -_INF if x.lo == 0.0 else _down2(math.log(x.lo))
    hi = _up2(math.log(x.hi)) if math.isfinite(x.hi) else _INF
    return Interval(lo, hi)


def isqrt(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("sqrt of empty interval")
    if x.lo < 0.0:
        raise DomainError(f"sqrt of interval reaching below zero: {x!r}")
    lo = max(0.0, _down2(math.sqrt(x.lo)))
    hi = _up2(math.sqrt(x.hi)) if math.isfinite(x.hi) else _INF
    return Interval(lo, hi)


def iabs(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("abs of empty interval")
    if x.lo >= 0.0:
        return x
    if x.hi <= 0.0:
        return -x
    return Interval(0.0, max(-x.lo, x.hi))


def _crosses(x: Interval, centre: Interval) -> bool:
    """Does x possibly contain centre + 2*pi*k for some integer k?

    Conservative (may answer yes spuriously); spurious hits only widen
    sin/cos results toward [-1, 1], which stays sound.
    """
    k = (x - centre) / TWO_PI
    return math.floor(k.hi) >= math.ceil(k.lo)


def _sin_core(x: Interval) -> Interval:
    if not x.is_finite():
        return Interval(-1.0, 1.0)
    if x.width() >= TWO_PI.hi:
        return Interval(-1.0, 1.0)
    vals = (math.sin(x.lo), math.sin(x.hi))
    lo = _down2(min(vals))
    hi = _up2(max(vals))
    if _crosses(x, HALF_PI):      # maximum at pi/2 + 2*pi*k
        hi = 1.0
    if _crosses(x, -HALF_PI):     # minimum at -pi/2 + 2*pi*k
        lo = -1.0
    return Interval(max(lo, -1.0), min(hi, 1.0))


def isin(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("sin of empty interval")
    return _sin_core(x)


def icos(x: Interval) -> Interval:
    if x.is_empty:
        raise IntervalError("cos of empty interval")
    if not x.is_finite():
        return Interval(-1.0, 1.0)
    if x.width() >= TWO_PI.hi:
        return Interval(-1.0, 1.0)
    vals = (math.cos(x.lo), math.cos(x.hi))
    lo = _down2(min(vals))
    hi = _up2(max(vals))
    if _crosses(x, thin(0.0)):    # maximum at 2*pi*k
        hi = 1.0
    if _crosses(x, PI):           # minimum at pi + 2*pi*k
        lo = -1.0
    return Interval(max(lo, -1.0), min(hi, 1.0))


FUNCTIONS = {
    "exp": iexp,
    "ln": iln,
    "log": iln,
    "sin": isin,
    "cos": icos,
    "sqrt": isqrt,
    "abs": iabs,
}


def isum(terms: Iterable[Interval]) -> Interval:
    """Left-to-right interval fold of a sum (order-sensitive by design)."""
    acc = Interval(0.0, 0.0)
    for t in terms:
        acc = acc + t
    return acc


# -- boxes ---------------------------------------------------------------


class Box:
    """Ordered mapping from variable names to intervals.

    Immutable in spirit: all combinators return new boxes.  Iteration order
    is the insertion order of the defining mapping, and names are unique.
    """

    __slots__ = ("_dims",)

    def __init__(self, dims: dict[str, Interval]):
        for name, iv in dims.items():
            if not isinstance(iv, Interval):
                raise IntervalError(f"dimension {name!r} is not an Interval")
            if iv.is_empty:
                raise IntervalError(f"dimension {name!r} is empty")
        object.__setattr__(self, "_dims", dict(dims))

    def __setattr__(self, name, value):
        raise AttributeError("Box is immutable")

    def __getitem__(self, name: str) -> Interval:
        return self._dims[name]

    def __contains__(self, name: str) -> bool:
        return name in self._dims

    def __iter__(self) -> Iterator[str]:
        return iter(self._dims)

    def __len__(self) -> int:
        return len(self._dims)

    def names(self) -> list[str]:
        return list(self._dims)

    def items(self) -> Iterable[tuple[str, Interval]]:
        return self._dims.items()

    def with_dim(self, name: str, iv: Interval) -> "Box":
        d = dict(self._dims)
        d[name] = iv
        return Box(d)

    def hull(self, other: "Box") -> "Box":
        if self.names() != other.names():
            raise IntervalError("hull of boxes with different dimensions")
        return Box({n: self[n].hull(other[n]) for n in self})

    def contains_box(self, other: "Box") -> bool:
        return all(self[n].contains_interval(other[n]) for n in self)

    def max_width(self) -> float:
        return max((iv.width() for iv in self._dims.values()), default=0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return self._dims == other._dims

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}={iv!r}" for n, iv in self._dims.items())
        return f"Box({inner})"
