"""Exact integer and rational primitives.

Every probability, count and envelope value in the package is either an
``int`` or a :class:`fractions.Fraction`; irrational quantities travel as a
:class:`BoundPair` of rationals that is guaranteed to enclose them.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Sequence, Union

import gmpy2

ExactRational = Fraction
RationalLike = Union[int, Fraction, str]

__all__ = [
    "BoundPair",
    "ExactRational",
    "as_rational",
    "binomial",
    "binomial_row",
    "convolve",
    "fixed_point_bounds",
    "floor_scaled",
    "iroot_floor",
    "vandermonde_convolve",
]


def as_rational(value: RationalLike | float | Decimal) -> Fraction:
    """Coerce ``value`` to an exact Fraction.

    Strings are read as written ("1/5", "0.1539", "3"), so decimal literals
    keep their printed value rather than the nearest binary double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, Decimal):
        return Fraction(value)
    if isinstance(value, float):
        # only exact binary values; use strings for decimals
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational")


@dataclass(frozen=True)
class BoundPair:
    """Certified enclosure ``lo <= v <= hi`` of a (possibly irrational) value."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty enclosure: lo={self.lo} > hi={self.hi}")

    @classmethod
    def exact(cls, value: RationalLike) -> "BoundPair":
        v = as_rational(value)
        return cls(v, v)

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def __contains__(self, value: RationalLike) -> bool:
        v = as_rational(value)
        return self.lo <= v <= self.hi

    def __add__(self, other: "BoundPair | RationalLike") -> "BoundPair":
        if isinstance(other, BoundPair):
            return BoundPair(self.lo + other.lo, self.hi + other.hi)
        v = as_rational(other)
        return BoundPair(self.lo + v, self.hi + v)

    __radd__ = __add__

    def __neg__(self) -> "BoundPair":
        return BoundPair(-self.hi, -self.lo)

    def __sub__(self, other: "BoundPair | RationalLike") -> "BoundPair":
        if isinstance(other, BoundPair):
            return self + (-other)
        return self + (-as_rational(other))

    def __rsub__(self, other: RationalLike) -> "BoundPair":
        return (-self) + other

    def scale(self, factor: RationalLike) -> "BoundPair":
        f = as_rational(factor)
        if f >= 0:
            return BoundPair(self.lo * f, self.hi * f)
        return BoundPair(self.hi * f, self.lo * f)

    def clip(self, lo: RationalLike = 0, hi: RationalLike = 1) -> "BoundPair":
        a, b = as_rational(lo), as_rational(hi)
        return BoundPair(min(max(self.lo, a), b), min(max(self.hi, a), b))

    def __float__(self) -> float:
        return float(self.mid)


_binomial_rows: dict[int, tuple[int, ...]] = {}
_binomial_lock = threading.Lock()


def binomial_row(n: int) -> tuple[int, ...]:
    """Return ``(C(n,0), ..., C(n,n))``, memoized per ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    row = _binomial_rows.get(n)
    if row is not None:
        return row
    values = [1] * (n + 1)
    for k in range(1, n // 2 + 1):
        values[k] = values[k - 1] * (n - k + 1) // k
        values[n - k] = values[k]
    row = tuple(values)
    with _binomial_lock:
        return _binomial_rows.setdefault(n, row)


def binomial(n: int, k: int) -> int:
    """``C(n, k)``, zero outside ``0 <= k <= n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if k < 0 or k > n:
        return 0
    return binomial_row(n)[k]


def floor_scaled(count: int, q: RationalLike) -> int:
    """Exact ``floor(count * q)`` for ``0 <= q <= 1``."""
    q = as_rational(q)
    if q < 0 or q > 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if count < 0:
        raise ValueError("count must be non-negative")
    return (count * q.numerator) // q.denominator


def _pack(values: Sequence[int], nbytes: int) -> int:
    return int.from_bytes(b"".join(v.to_bytes(nbytes, "little") for v in values), "little")


def convolve(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Integer sequence convolution ``out[k] = sum_j a[j] * b[k - j]``."""
    if not a or not b:
        return []
    size = len(a) + len(b) - 1
    if len(a) * len(b) < 4096 or any(x < 0 for x in a) or any(x < 0 for x in b):
        out = [0] * size
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    out[i + j] += x * y
        return out
    # Kronecker substitution: one big-int product instead of len(a)*len(b) small ones
    bits = max(x.bit_length() for x in a) + max(x.bit_length() for x in b)
    bits += min(len(a), len(b)).bit_length() + 1
    nbytes = (bits + 7) // 8
    # GMP's FFT multiply; CPython's Karatsuba is far slower at these sizes
    product = int(gmpy2.mpz(_pack(a, nbytes)) * gmpy2.mpz(_pack(b, nbytes)))
    raw = product.to_bytes((size + 1) * nbytes, "little")
    return [int.from_bytes(raw[i * nbytes:(i + 1) * nbytes], "little") for i in range(size)]


def vandermonde_convolve(row: Sequence[int], delta_m: int) -> list[int]:
    """Convolve ``row`` with ``C(delta_m, .)``.

    ``out[k] = sum_j row[j] * C(delta_m, k - j)`` for ``k`` in
    ``0 .. len(row) - 1 + delta_m``: the number of ``delta_m``-bit
    extensions of the counted strings that carry ``k`` ones in total.
    """
    if delta_m < 0:
        raise ValueError("delta_m must be non-negative")
    return convolve([int(v) for v in row], binomial_row(delta_m))


def iroot_floor(x: int, n: int) -> tuple[int, bool]:
    """Integer ``n``-th root: ``(floor(x ** (1/n)), exact)``."""
    if x < 0:
        raise ValueError("x must be non-negative")
    root, exact = gmpy2.iroot(x, n)
    return int(root), bool(exact)


def fixed_point_bounds(numerator: int, denominator: int, bits: int) -> tuple[int, int]:
    """Integers ``(lo, hi)`` with ``lo <= 2**bits * num/den <= hi`` and ``hi - lo <= 1``."""
    scaled = numerator << bits
    lo = scaled // denominator
    return lo, lo if lo * denominator == scaled else lo + 1


def bits_for(precision: Fraction) -> int:
    """Smallest ``b`` with ``2**-b <= precision``."""
    if precision <= 0:
        raise ValueError("precision must be positive")
    inv = Fraction(1) / precision
    return max(0, math.ceil(math.log2(inv.numerator) - math.log2(inv.denominator)) + 1)
