"""Probability densities as interval-evaluable objects.

Each distribution provides a pdf enclosure, an enclosure of the pdf's 4th
derivative (needed by the quadrature error term), and a certified finite
interval carrying all but a requested amount of probability mass.  Built-in
densities use hard-coded closed forms for the derivatives; user-defined
densities are differentiated symbolically.

Tail certification uses closed-form tail inequalities evaluated in interval
arithmetic (normal: the Mills-ratio bound ``P(X > z) <= pdf(z)/z``;
exponential: ``exp(-rate*x)``), so the returned bracket is verified, not
just numerically plausible.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import cached_property

from . import expr as ex
from .intervals import Box, Interval, TWO_PI, from_fraction, isqrt, iexp, thin
from .pdrh import DistributionSpec


class UnsupportedDensity(ValueError):
    pass


class TailBoundError(ValueError):
    pass


_ONE = thin(1.0)
_SQRT_TWO_PI = isqrt(TWO_PI)

# Internal certification target: aim slightly below the requested tail mass
# so downstream verified integrals keep a usable margin above 1 - mass.
_TAIL_HEADROOM = 0.9


class Distribution:
    """Common interface; concrete behaviour in subclasses."""

    support: Interval

    def pdf_enclosure(self, x: Interval) -> Interval:
        """Encloses the range of the density (zero-extended) over x."""
        inter = x.intersect(self.support)
        if inter.is_empty:
            return Interval(0.0, 0.0)
        core = self._pdf_core(inter).clamp_nonnegative()
        if not self.support.contains_interval(x):
            core = core.hull(Interval(0.0, 0.0))
        return core

    def d4_enclosure(self, x: Interval) -> Interval:
        """Encloses the 4th derivative of the density restricted to its support."""
        inter = x.intersect(self.support)
        if inter.is_empty:
            return Interval(0.0, 0.0)
        return self._d4_core(inter)

    def tail_bounds(self, mass: float) -> Interval:
        """Finite [a, b] within the support with certified tail mass <= mass."""
        raise NotImplementedError

    def _pdf_core(self, x: Interval) -> Interval:
        raise NotImplementedError

    def _d4_core(self, x: Interval) -> Interval:
        raise NotImplementedError


def _check_mass(mass: float) -> None:
    if not (0.0 < mass < 1.0):
        raise TailBoundError(f"tail mass must be in (0, 1), got {mass}")


class Normal(Distribution):
    def __init__(self, mu: Fraction, sigma: Fraction):
        if sigma <= 0:
            raise UnsupportedDensity(f"normal sigma must be > 0, got {sigma}")
        self.mu = Fraction(mu)
        self.sigma = Fraction(sigma)
        self.support = Interval(-math.inf, math.inf)
        self._mu_iv = from_fraction(self.mu)
        self._sigma_iv = from_fraction(self.sigma)
        self._coeff = _ONE / (self._sigma_iv * _SQRT_TWO_PI)

    def _z2(self, x: Interval) -> Interval:
        return ((x - self._mu_iv) / self._sigma_iv).pow_int(2)

    def _pdf_core(self, x: Interval) -> Interval:
        return self._coeff * iexp(-(self._z2(x) / thin(2.0)))

    def _d4_core(self, x: Interval) -> Interval:
        # f''''(x) = f(x) * (z^4 - 6 z^2 + 3) / sigma^4, written as
        # ((z^2 - 3)^2 - 6) to avoid the dependency between z^4 and z^2.
        w = self._z2(x)
        herm = (w - thin(3.0)).pow_int(2) - thin(6.0)
        return self._pdf_core(x) * herm / self._sigma_iv.pow_int(4)

    def tail_bounds(self, mass: float) -> Interval:
        _check_mass(mass)
        target = mass * _TAIL_HEADROOM

        def certified(z: float) -> bool:
            # two-sided tail <= 2 * phi(z) / z  (standard-normal Mills bound)
            if z <= 0.0:
                return False
            zi = thin(z)
            bound = thin(2.0) * iexp(-(zi.pow_int(2) / thin(2.0))) / (_SQRT_TWO_PI * zi)
            return bound.hi <= target

        z = 1.0
        while not certified(z):
            z += 0.5
            if z > 400.0:
                raise TailBoundError(f"cannot certify normal tail mass {mass}")
        lo_z, hi_z = z - 0.5, z
        for _ in range(20):  # tighten the bracket; hi_z stays certified
            mid_z = 0.5 * (lo_z + hi_z)
            if certified(mid_z):
                hi_z = mid_z
            else:
                lo_z = mid_z
        zi = thin(hi_z)
        a = (self._mu_iv - zi * self._sigma_iv).lo
        b = (self._mu_iv + zi * self._sigma_iv).hi
        return Interval(a, b)


class Uniform(Distribution):
    def __init__(self, a: Fraction, b: Fraction):
        if b <= a:
            raise UnsupportedDensity(f"uniform requires a < b, got [{a}, {b}]")
        self.a = Fraction(a)
        self.b = Fraction(b)
        lo = from_fraction(self.a)
        hi = from_fraction(self.b)
        self.support = Interval(lo.lo, hi.hi)
        self._height = _ONE / (hi - lo)

    def _pdf_core(self, x: Interval) -> Interval:
        return self._height

    def _d4_core(self, x: Interval) -> Interval:
        return Interval(0.0, 0.0)

    def tail_bounds(self, mass: float) -> Interval:
        _check_mass(mass)
        return self.support


class Exponential(Distribution):
    def __init__(self, rate: Fraction):
        if rate <= 0:
            raise UnsupportedDensity(f"exponential rate must be > 0, got {rate}")
        self.rate = Fraction(rate)
        self.support = Interval(0.0, math.inf)
        self._rate_iv = from_fraction(self.rate)

    def _pdf_core(self, x: Interval) -> Interval:
        return self._rate_iv * iexp(-(self._rate_iv * x))

    def _d4_core(self, x: Interval) -> Interval:
        return self._rate_iv.pow_int(4) * self._pdf_core(x)

    def tail_bounds(self, mass: float) -> Interval:
        _check_mass(mass)
        target = mass * _TAIL_HEADROOM

        def certified(b: float) -> bool:
            return iexp(-(self._rate_iv * thin(b))).hi <= target

        b = 1.0 / float(self.rate)
        while not certified(b):
            b *= 2.0
            if not math.isfinite(b):
                raise TailBoundError(f"cannot certify exponential tail mass {mass}")
        lo_b, hi_b = b / 2.0, b
        for _ in range(20):
            mid_b = 0.5 * (lo_b + hi_b)
            if certified(mid_b):
                hi_b = mid_b
            else:
                lo_b = mid_b
        return Interval(0.0, hi_b)


class UserPdf(Distribution):
    """Density given as an expression of one variable on a finite support."""

    def __init__(self, name: str, pdf: ex.Expr, lo: Fraction, hi: Fraction):
        if hi <= lo:
            raise UnsupportedDensity(f"pdf support [{lo}, {hi}] is empty")
        self.name = name
        self.pdf = pdf
        self.support = Interval(from_fraction(Fraction(lo)).lo, from_fraction(Fraction(hi)).hi)
        if not self.support.is_finite():
            raise UnsupportedDensity("user-defined densities require finite support")

    @cached_property
    def _d4_expr(self) -> ex.Expr:
        d = self.pdf
        try:
            for _ in range(4):
                d = ex.differentiate(d, self.name)
        except ex.ExprError as err:
            raise UnsupportedDensity(
                f"pdf expression is not 4-times differentiable: {err}"
            ) from err
        return d

    def _pdf_core(self, x: Interval) -> Interval:
        return ex.eval_interval(self.pdf, Box({self.name: x}))

    def _d4_core(self, x: Interval) -> Interval:
        return ex.eval_interval(self._d4_expr, Box({self.name: x}))

    def tail_bounds(self, mass: float) -> Interval:
        _check_mass(mass)
        return self.support


def make_distribution(name: str, spec: DistributionSpec) -> Distribution:
    args = spec.args
    if spec.kind == "normal":
        mu, sigma = spec.arg_fractions()
        return Normal(mu, sigma)
    if spec.kind == "uniform":
        a, b = spec.arg_fractions()
        return Uniform(a, b)
    if spec.kind == "exponential":
        (rate,) = spec.arg_fractions()
        return Exponential(rate)
    if spec.kind == "user":
        pdf_e, lo_e, hi_e = args
        assert isinstance(lo_e, ex.Const) and isinstance(hi_e, ex.Const)
        return UserPdf(name, pdf_e, lo_e.value, hi_e.value)
    raise UnsupportedDensity(f"unknown distribution kind {spec.kind!r}")
