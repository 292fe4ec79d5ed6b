"""Factory and envelope functions with certified evaluation.

Each variant is a frozen dataclass. ``evaluate`` returns a :class:`BoundPair`
enclosing the true value; for rational-valued variants the pair is exact.
Irrational values (square roots, rational powers, the Gaussian integral in
the smoothed elbow) are enclosed with integer roots and truncated series
whose remainders are bounded explicitly, so no float ever reaches a count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import ClassVar

from .numerics import BoundPair, RationalLike, as_rational, bits_for, fixed_point_bounds, iroot_floor

__all__ = [
    "Constant",
    "DEFAULT_PRECISION",
    "Elbow",
    "Function",
    "Linear",
    "Parabola",
    "PiecewiseLinear",
    "Power",
    "Scaled",
    "Shifted",
    "SmoothedElbow",
    "VARIANTS",
    "evaluate",
    "fh_envelope",
    "gaussian_integral",
    "nacu_peres_envelope",
    "second_derivative_bound",
]

DEFAULT_PRECISION = Fraction(1, 2**64)

CONCAVE, CONVEX, LINEAR = "concave", "convex", "linear"

_RANGE_GRID = 64


def _check_unit(p: Fraction) -> Fraction:
    p = as_rational(p)
    if p < 0 or p > 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return p


class Function:
    """Base class of every factory and envelope function."""

    variant: ClassVar[str] = ""
    rational_valued: ClassVar[bool] = True

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, str)) and not isinstance(value, bool):
                object.__setattr__(self, f.name, as_rational(value))
        self._validate()
        self._check_range()

    def _validate(self) -> None:
        pass

    def _check_range(self) -> None:
        points = {Fraction(j, _RANGE_GRID) for j in range(_RANGE_GRID + 1)}
        points.update(self.knots)
        for x in sorted(points):
            v = self.evaluate(x, Fraction(1, 2**20))
            if v.lo < 0 or v.hi > 1:
                raise ValueError(f"{self!r} leaves [0, 1] at p={x}: {float(v.lo)}..{float(v.hi)}")

    @property
    def shape(self) -> str:
        raise NotImplementedError

    @property
    def knots(self) -> tuple[Fraction, ...]:
        """Interior points where the function is not smooth."""
        return ()

    @property
    def piecewise_linear(self) -> bool:
        return False

    def evaluate(self, p: RationalLike, precision: RationalLike = DEFAULT_PRECISION) -> BoundPair:
        p = _check_unit(as_rational(p))
        precision = as_rational(precision)
        if precision <= 0:
            raise ValueError("precision must be positive")
        return self._eval(p, precision)

    def _eval(self, p: Fraction, precision: Fraction) -> BoundPair:
        raise NotImplementedError

    def exact(self, p: RationalLike) -> Fraction:
        """Value at ``p`` for rational-valued variants."""
        v = self.evaluate(p)
        if not v.is_exact:
            raise ValueError(f"{self.variant} is not rational-valued at {p}")
        return v.lo

    def __float__(self) -> float:  # pragma: no cover - guard against misuse
        raise TypeError("evaluate a Function at a point instead")


@dataclass(frozen=True)
class Constant(Function):
    c: Fraction
    variant: ClassVar[str] = "constant"

    @property
    def shape(self) -> str:
        return LINEAR

    @property
    def piecewise_linear(self) -> bool:
        return True

    def _eval(self, p, precision):
        return BoundPair.exact(self.c)


@dataclass(frozen=True)
class Linear(Function):
    """``c + h*p``."""

    c: Fraction
    h: Fraction
    variant: ClassVar[str] = "linear"

    @property
    def shape(self) -> str:
        return LINEAR

    @property
    def piecewise_linear(self) -> bool:
        return True

    def _eval(self, p, precision):
        return BoundPair.exact(self.c + self.h * p)


@dataclass(frozen=True)
class Elbow(Function):
    """``min(c*p, 1 - eps)`` with ``c > 1`` and ``0 < eps < 1``."""

    c: Fraction
    eps: Fraction
    variant: ClassVar[str] = "elbow"

    def _validate(self):
        if not self.c > 1:
            raise ValueError("elbow slope c must exceed 1")
        if not 0 < self.eps < 1:
            raise ValueError("elbow eps must lie in (0, 1)")

    @classmethod
    def through(cls, x: RationalLike, y: RationalLike) -> "Elbow":
        """Elbow function whose corner sits at ``(x, y)``."""
        x, y = as_rational(x), as_rational(y)
        return cls(y / x, 1 - y)

    @property
    def corner(self) -> tuple[Fraction, Fraction]:
        return (1 - self.eps) / self.c, 1 - self.eps

    @property
    def shape(self) -> str:
        return CONCAVE

    @property
    def knots(self):
        return (self.corner[0],)

    @property
    def piecewise_linear(self) -> bool:
        return True

    def _eval(self, p, precision):
        return BoundPair.exact(min(self.c * p, 1 - self.eps))


def gaussian_integral(z: RationalLike, precision: RationalLike = DEFAULT_PRECISION) -> BoundPair:
    """Enclose ``int_0^z exp(-t^2) dt`` for rational ``z >= 0``.

    Sums the alternating Taylor series in fixed point; once the terms are
    decreasing (index ``n >= z^2``) the remainder lies between zero and the
    first omitted term.
    """
    z = as_rational(z)
    if z < 0:
        raise ValueError("z must be non-negative")
    if z == 0:
        return BoundPair.exact(0)
    precision = as_rational(precision)
    r, s = z.numerator, z.denominator
    r2, s2 = r * r, s * s
    start = math.ceil(z * z)
    # rough term count to size the guard bits
    guard = 8 + max(start, 1).bit_length() * 2
    bits = bits_for(precision) + guard
    lo = hi = 0
    num, den = r, s  # z^(2n+1) = num/den
    fact = 1
    n = 0
    while True:
        t_den = den * fact * (2 * n + 1)
        t_lo, t_hi = fixed_point_bounds(num, t_den, bits)
        if n >= start and t_hi <= 1:
            # tail between 0 and (-1)^n * term_n
            if n % 2 == 0:
                hi += t_hi
            else:
                lo -= t_hi
            break
        if n % 2 == 0:
            lo += t_lo
            hi += t_hi
        else:
            lo -= t_hi
            hi -= t_lo
        n += 1
        num *= r2
        den *= s2
        fact *= n
    scale = 1 << bits
    out = BoundPair(Fraction(lo, scale), Fraction(hi, scale))
    if out.width > precision:
        raise AssertionError("gaussian_integral precision bookkeeping failed")
    return out


@dataclass(frozen=True)
class SmoothedElbow(Function):
    """Twice-differentiable elbow: linear ``c*p`` up to the corner, then
    ``(1 - eps) + delta * int_0^{c (p - x*) / delta} exp(-t^2) dt``."""

    c: Fraction
    eps: Fraction
    delta: Fraction
    variant: ClassVar[str] = "smoothed-elbow"
    rational_valued: ClassVar[bool] = False

    def _validate(self):
        if not self.c > 1:
            raise ValueError("c must exceed 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def corner(self) -> tuple[Fraction, Fraction]:
        return (1 - self.eps) / self.c, 1 - self.eps

    @property
    def shape(self) -> str:
        return CONCAVE

    def _eval(self, p, precision):
        x0, y0 = self.corner
        if p < x0:
            return BoundPair.exact(self.c * p)
        z = self.c * (p - x0) / self.delta
        return gaussian_integral(z, precision / self.delta).scale(self.delta) + y0


@dataclass(frozen=True)
class Parabola(Function):
    """``c * (1 - 4 (p - 1/2)^2)``."""

    c: Fraction
    variant: ClassVar[str] = "parabola"

    def _validate(self):
        if not 0 < self.c <= 1:
            raise ValueError("parabola height must lie in (0, 1]")

    @property
    def shape(self) -> str:
        return CONCAVE

    def _eval(self, p, precision):
        d = p - Fraction(1, 2)
        return BoundPair.exact(self.c * (1 - 4 * d * d))


@dataclass(frozen=True)
class Power(Function):
    """``p ** q`` for rational ``q > 0``; ``Power(1/2)`` is the square root."""

    q: Fraction
    variant: ClassVar[str] = "power"
    rational_valued: ClassVar[bool] = False

    def _validate(self):
        if not self.q > 0:
            raise ValueError("exponent must be positive")

    @property
    def shape(self) -> str:
        if self.q < 1:
            return CONCAVE
        return LINEAR if self.q == 1 else CONVEX

    def _eval(self, p, precision):
        if p == 0 or p == 1:
            return BoundPair.exact(p)
        a, b = self.q.numerator, self.q.denominator
        u, v = p.numerator ** a, p.denominator ** a
        if b == 1:
            return BoundPair.exact(Fraction(u, v))
        ru, ok_u = iroot_floor(u, b)
        rv, ok_v = iroot_floor(v, b)
        if ok_u and ok_v:
            return BoundPair.exact(Fraction(ru, rv))
        bits = bits_for(precision)
        root, exact = iroot_floor((u << (bits * b)) // v, b)
        scale = 1 << bits
        return BoundPair(Fraction(root, scale), Fraction(root + 1, scale))


@dataclass(frozen=True)
class PiecewiseLinear(Function):
    """Linear interpolation through ``points``, which must span ``x = 0 .. 1``."""

    points: tuple[tuple[Fraction, Fraction], ...]
    variant: ClassVar[str] = "piecewise-linear"

    def __post_init__(self):
        pts = tuple((as_rational(x), as_rational(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        super().__post_init__()

    def _validate(self):
        xs = [x for x, _ in self.points]
        if len(xs) < 2 or xs[0] != 0 or xs[-1] != 1:
            raise ValueError("points must start at x=0 and end at x=1")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knot abscissae must strictly increase")
        if self._shape() is None:
            raise ValueError("piecewise-linear functions must be concave or convex")

    def _slopes(self) -> list[Fraction]:
        return [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(self.points, self.points[1:])]

    def _shape(self) -> str | None:
        s = self._slopes()
        if all(a == b for a, b in zip(s, s[1:])):
            return LINEAR
        if all(a >= b for a, b in zip(s, s[1:])):
            return CONCAVE
        if all(a <= b for a, b in zip(s, s[1:])):
            return CONVEX
        return None

    @property
    def shape(self) -> str:
        return self._shape()

    @property
    def knots(self):
        return tuple(x for x, _ in self.points[1:-1])

    @property
    def piecewise_linear(self) -> bool:
        return True

    def _eval(self, p, precision):
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            if p <= x1:
                return BoundPair.exact(y0 + (y1 - y0) * (p - x0) / (x1 - x0))
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class Scaled(Function):
    """``min(1, factor * base(p))``."""

    base: Function
    factor: Fraction
    variant: ClassVar[str] = "scaled"

    def _validate(self):
        if not self.factor > 0:
            raise ValueError("factor must be positive")

    @property
    def rational_valued(self) -> bool:  # type: ignore[override]
        return self.base.rational_valued

    @property
    def shape(self) -> str:
        return self.base.shape

    @property
    def knots(self):
        return self.base.knots

    @property
    def piecewise_linear(self) -> bool:
        return self.base.piecewise_linear

    def _eval(self, p, precision):
        return self.base._eval(p, precision / self.factor).scale(self.factor).clip(0, 1)


@dataclass(frozen=True)
class Shifted(Function):
    """``min(1, base(p) + offset)``."""

    base: Function
    offset: Fraction
    variant: ClassVar[str] = "shifted"

    @property
    def rational_valued(self) -> bool:  # type: ignore[override]
        return self.base.rational_valued

    @property
    def shape(self) -> str:
        return self.base.shape

    @property
    def knots(self):
        return self.base.knots

    @property
    def piecewise_linear(self) -> bool:
        return self.base.piecewise_linear

    def _eval(self, p, precision):
        return (self.base._eval(p, precision) + self.offset).clip(0, 1)


VARIANTS: dict[str, type[Function]] = {
    cls.variant: cls
    for cls in (Constant, Linear, Elbow, SmoothedElbow, Parabola, Power, PiecewiseLinear, Scaled, Shifted)
}


def evaluate(f: Function, p: RationalLike, precision: RationalLike = DEFAULT_PRECISION) -> BoundPair:
    return f.evaluate(p, precision)


def _sqrt_two_over_e_upper() -> Fraction:
    # e >= sum_{k<=25} 1/k!, so 2/e is bounded above by 2 / that partial sum
    e_lo = sum(Fraction(1, math.factorial(k)) for k in range(26))
    ratio = 2 / e_lo
    bits = 80
    root, _ = iroot_floor((ratio.numerator << (2 * bits)) // ratio.denominator + 1, 2)
    return Fraction(root + 1, 1 << bits)


_SQRT_TWO_OVER_E_UP = _sqrt_two_over_e_upper()


def second_derivative_bound(f: SmoothedElbow) -> Fraction:
    """Rational upper bound on ``c^2 sqrt(2) / (delta sqrt(e))``."""
    if not isinstance(f, SmoothedElbow):
        raise TypeError("second_derivative_bound needs a SmoothedElbow")
    return f.c * f.c / f.delta * _SQRT_TWO_OVER_E_UP


def fh_envelope(f: SmoothedElbow, n: int, variant: str = "improved") -> Function:
    """Upper envelope for the smoothed elbow at ``n`` bits.

    ``original`` adds ``C / 2n``; ``improved`` multiplies by
    ``1 + C / (2n (1 - eps))`` and therefore vanishes at ``p = 0``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    bound = second_derivative_bound(f)
    if variant == "original":
        return Shifted(f, bound / (2 * n))
    if variant == "improved":
        return Scaled(f, 1 + bound / (2 * n * (1 - f.eps)))
    raise ValueError(f"unknown envelope variant {variant!r}")


def nacu_peres_envelope(p: float, c: float, eps: float, n: int, c1: float, c2: float) -> float:
    """Float value of the classic exponential-rate upper envelope.

    Display only: its first valid checkpoint needs tens of thousands of
    bits, so it is never used to build a plan.
    """
    return (
        min(c * p, 1 - eps)
        + c1 * math.sqrt(2 / n) * max(p - (0.5 - 3 * eps), 0.0)
        + c2 * math.exp(-2 * eps * eps * n) * max(p - 1 / 9, 0.0)
    )
