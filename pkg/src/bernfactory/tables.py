"""Count tables, Bernstein expansions and envelope verification.

At checkpoint ``m`` with ``k`` ones, ``A(k)`` strings output 1, ``B(k)``
strings output 0 and the remaining ``C(m, k) - A(k) - B(k)`` continue. Only
the sizes are stored; the strings themselves are never enumerated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Sequence

import gmpy2

from .functions import CONCAVE, CONVEX, LINEAR, Function
from .numerics import BoundPair, RationalLike, as_rational, binomial_row, bits_for, vandermonde_convolve

__all__ = [
    "BernsteinPoly",
    "CountTable",
    "EnvelopePair",
    "EnvelopeUnverified",
    "InvalidTable",
    "NestingViolation",
    "UndecidableFloor",
    "VerificationFailed",
    "VerificationReport",
    "bernstein_eval",
    "bernstein_poly",
    "build_count_table",
    "verify_envelope",
]

PROOF = "PROOF"
HEURISTIC = "HEURISTIC"

#: starting guard bits and number of 10x tightenings before giving up on a floor
FLOOR_GUARD_BITS = 32
FLOOR_MAX_TIGHTEN = 40


class InvalidTable(ValueError):
    pass


class NestingViolation(InvalidTable):
    def __init__(self, tier: int, k: int, side: str, deficit: int):
        self.tier, self.k, self.side, self.deficit = tier, k, side, deficit
        super().__init__(
            f"nesting violated at tier {tier}, k={k}: new{side} = {deficit} < 0"
        )


class EnvelopeUnverified(ValueError):
    pass


class UndecidableFloor(ArithmeticError):
    pass


class VerificationFailed(ValueError):
    def __init__(self, point: Fraction, margin: BoundPair, side: str, checkpoint: int):
        self.point, self.margin, self.side, self.checkpoint = point, margin, side, checkpoint
        super().__init__(
            f"{side} envelope fails at n={checkpoint}, p={point} "
            f"(margin {float(margin.lo):.3e}..{float(margin.hi):.3e})"
        )


# ---------------------------------------------------------------------------
# Bernstein expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernsteinPoly:
    """Order-``n`` Bernstein expansion with integer-scaled coefficient bounds.

    ``weights_lo[k] / denom <= C(n,k) g(k/n) <= weights_hi[k] / denom``.
    """

    n: int
    denom: int
    weights_lo: tuple[int, ...]
    weights_hi: tuple[int, ...]

    @property
    def exact(self) -> bool:
        return self.weights_lo == self.weights_hi

    @cached_property
    def _mpz(self) -> tuple[list, list]:
        lo = [gmpy2.mpz(c) for c in self.weights_lo]
        return lo, lo if self.exact else [gmpy2.mpz(c) for c in self.weights_hi]

    def _horner(self, weights: Sequence, u: int, w: int) -> int:
        # sum_k weights[k] u^k w^(n-k), accumulated homogeneously
        acc = gmpy2.mpz(0)
        upow = gmpy2.mpz(1)
        w = gmpy2.mpz(w)
        for c in weights:
            acc = acc * w + c * upow
            upow *= u
        return int(acc)

    def __call__(self, p: RationalLike) -> BoundPair:
        p = as_rational(p)
        if p < 0 or p > 1:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        u, v = p.numerator, p.denominator
        w = v - u
        scale = self.denom * v**self.n
        wlo, whi = self._mpz
        lo = self._horner(wlo, u, w)
        hi = lo if self.exact else self._horner(whi, u, w)
        return BoundPair(Fraction(lo, scale), Fraction(hi, scale))


@lru_cache(maxsize=256)
def bernstein_poly(g: Function, n: int, precision: Fraction = Fraction(1, 2**64)) -> BernsteinPoly:
    if n < 1:
        raise ValueError("n must be positive")
    row = binomial_row(n)
    values = [g.evaluate(Fraction(k, n), precision) for k in range(n + 1)]
    if all(v.is_exact for v in values):
        denom = 1
        for v in values:
            denom = math.lcm(denom, v.lo.denominator)
        ws = tuple(c * v.lo.numerator * (denom // v.lo.denominator) for c, v in zip(row, values))
        return BernsteinPoly(n, denom, ws, ws)
    bits = bits_for(precision) + 2
    scale = 1 << bits
    lo = []
    hi = []
    for c, v in zip(row, values):
        a = v.lo * scale
        b = v.hi * scale
        lo.append(c * (a.numerator // a.denominator))
        hi.append(c * -((-b.numerator) // b.denominator))
    return BernsteinPoly(n, scale, tuple(lo), tuple(hi))


def bernstein_eval(g: Function, n: int, p: RationalLike,
                   precision: RationalLike = Fraction(1, 2**64)) -> BoundPair:
    """Certified value of ``sum_k C(n,k) g(k/n) p^k (1-p)^(n-k)``."""
    return bernstein_poly(g, n, as_rational(precision))(p)


# ---------------------------------------------------------------------------
# Envelope pairs and verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    mode: str
    label: str
    checkpoint: int
    points: int
    min_margin_upper: Fraction
    min_margin_lower: Fraction
    min_interior_margin_upper: Fraction
    min_interior_margin_lower: Fraction
    witness_upper: Fraction
    witness_lower: Fraction
    passed: bool

    @property
    def min_margin(self) -> Fraction:
        return min(self.min_margin_upper, self.min_margin_lower)

    @property
    def min_interior_margin(self) -> Fraction:
        return min(self.min_interior_margin_upper, self.min_interior_margin_lower)


@dataclass(frozen=True)
class EnvelopePair:
    """Lower envelope ``a`` and upper envelope ``g`` (so ``b = 1 - g``) at one checkpoint."""

    lower: Function
    upper: Function
    checkpoint: int
    report: VerificationReport | None = field(default=None, compare=False)

    @property
    def verified(self) -> bool:
        return self.report is not None and self.report.passed


def _knots_valid(target: Function, pair: EnvelopePair) -> tuple[bool, bool]:
    """Whether a knot check proves the (upper, lower) condition.

    On each linear piece of ``f``, ``B(g) - f`` is concave when ``B(g)`` is,
    so its minimum sits at the piece ends. Jensen covers ``g == f`` on the
    matching side.
    """
    pl = target.piecewise_linear
    upper = (pl and pair.upper.shape in (CONCAVE, LINEAR)) or (
        pair.upper == target and target.shape in (CONVEX, LINEAR))
    lower = (pl and pair.lower.shape in (CONVEX, LINEAR)) or (
        pair.lower == target and target.shape in (CONCAVE, LINEAR))
    return upper, lower


def _margin(f_val: BoundPair, b_val: BoundPair, side: str) -> BoundPair:
    return b_val - f_val if side == "upper" else f_val - b_val


def verify_envelope(target: Function, pair: EnvelopePair, mode: str = "knots", count: int = 1024,
                    *, raise_on_failure: bool = True, max_tighten: int = 8) -> EnvelopePair:
    """Check ``B_n(g) >= f`` and ``B_n(a) <= f`` and attach a report.

    ``knots`` checks the knots of ``f`` plus both endpoints and is only
    accepted where it constitutes a proof (see :func:`_knots_valid`).
    ``grid`` checks ``count + 1`` equally spaced points plus the knots and is
    labelled HEURISTIC unless the knot argument also applies.
    """
    n = pair.checkpoint
    if n < 1:
        raise ValueError("checkpoint must be positive")
    up_ok, lo_ok = _knots_valid(target, pair)
    if mode == "knots":
        if not (up_ok and lo_ok):
            raise ValueError("knot verification is not a proof here; use grid mode")
        pts = {Fraction(0), Fraction(1), *target.knots}
    elif mode == "grid":
        if count < 1:
            raise ValueError("grid count must be positive")
        pts = {Fraction(j, count) for j in range(count + 1)} | set(target.knots)
    else:
        raise ValueError(f"unknown verification mode {mode!r}")
    label = PROOF if (up_ok and lo_ok) else HEURISTIC

    mins = {}
    for side, env in (("upper", pair.upper), ("lower", pair.lower)):
        best = best_int = None
        wit = Fraction(0)
        for x in sorted(pts):
            m = _certified_margin(target, env, n, x, side, max_tighten)
            if m.lo < 0 and raise_on_failure:
                raise VerificationFailed(x, m, side, n)
            if best is None or m.lo < best:
                best, wit = m.lo, x
            if 0 < x < 1 and (best_int is None or m.lo < best_int):
                best_int = m.lo
        mins[side] = (best, best_int if best_int is not None else best, wit)

    passed = mins["upper"][0] >= 0 and mins["lower"][0] >= 0
    report = VerificationReport(
        mode=mode, label=label, checkpoint=n, points=len(pts),
        min_margin_upper=mins["upper"][0], min_margin_lower=mins["lower"][0],
        min_interior_margin_upper=mins["upper"][1], min_interior_margin_lower=mins["lower"][1],
        witness_upper=mins["upper"][2], witness_lower=mins["lower"][2], passed=passed,
    )
    return EnvelopePair(pair.lower, pair.upper, n, report)


def _certified_margin(target: Function, env: Function, n: int, x: Fraction,
                      side: str, max_tighten: int) -> BoundPair:
    if x in (0, 1) and env == target:
        # B_n(g) interpolates g at the endpoints, so the margin is exactly zero
        return BoundPair.exact(0)
    precision = Fraction(1, 2**64)
    for _ in range(max_tighten + 1):
        m = _margin(target.evaluate(x, precision), bernstein_eval(env, n, x, precision), side)
        if m.lo >= 0 or m.hi < 0:
            return m
        precision /= 2**32
    return m


# ---------------------------------------------------------------------------
# Count tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountTable:
    """Per-checkpoint terminal counts and the hazards derived from them.

    ``new_a[i][k]`` counts strings that first land in ``A`` at tier ``i``;
    ``pool[i][k]`` counts strings reaching tier ``i`` with ``k`` ones, i.e.
    descendants of continuing strings from tier ``i-1``.
    """

    checkpoints: tuple[int, ...]
    A: tuple[tuple[int, ...], ...]
    B: tuple[tuple[int, ...], ...]
    new_a: tuple[tuple[int, ...], ...]
    new_b: tuple[tuple[int, ...], ...]
    pool: tuple[tuple[int, ...], ...]

    @classmethod
    def from_counts(cls, checkpoints: Sequence[int], A: Sequence[Sequence[int]],
                    B: Sequence[Sequence[int]]) -> "CountTable":
        """Derive hazards from raw counts, rejecting any invalid table."""
        checkpoints = tuple(int(m) for m in checkpoints)
        if not checkpoints or len(A) != len(checkpoints) or len(B) != len(checkpoints):
            raise InvalidTable("need one A row and one B row per checkpoint")
        if checkpoints[0] < 1 or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise InvalidTable("checkpoints must be positive and strictly increasing")
        A = tuple(tuple(int(v) for v in row) for row in A)
        B = tuple(tuple(int(v) for v in row) for row in B)
        new_a, new_b, pool = [], [], []
        prev_m = 0
        prev_a = prev_b = prev_c = None
        for i, m in enumerate(checkpoints):
            row_c = binomial_row(m)
            if len(A[i]) != m + 1 or len(B[i]) != m + 1:
                raise InvalidTable(f"tier {i}: rows must have length {m + 1}")
            for k in range(m + 1):
                if A[i][k] < 0 or B[i][k] < 0 or A[i][k] + B[i][k] > row_c[k]:
                    raise InvalidTable(f"tier {i}, k={k}: counts outside [0, C({m},{k})]")
            if prev_c is None:
                na, nb, pl = list(A[i]), list(B[i]), list(row_c)
            else:
                d = m - prev_m
                inh_a = vandermonde_convolve(prev_a, d)
                inh_b = vandermonde_convolve(prev_b, d)
                pl = vandermonde_convolve(prev_c, d)
                na = [x - y for x, y in zip(A[i], inh_a)]
                nb = [x - y for x, y in zip(B[i], inh_b)]
            for k in range(m + 1):
                if na[k] < 0:
                    raise NestingViolation(i, k, "A", na[k])
                if nb[k] < 0:
                    raise NestingViolation(i, k, "B", nb[k])
                if na[k] + nb[k] > pl[k]:
                    raise InvalidTable(f"tier {i}, k={k}: new terminals exceed the pool")
            new_a.append(tuple(na))
            new_b.append(tuple(nb))
            pool.append(tuple(pl))
            prev_m, prev_a, prev_b = m, A[i], B[i]
            prev_c = [c - a - b for c, a, b in zip(row_c, A[i], B[i])]
        return cls(checkpoints, A, B, tuple(new_a), tuple(new_b), tuple(pool))

    @property
    def tiers(self) -> int:
        return len(self.checkpoints)

    @property
    def C(self) -> tuple[tuple[int, ...], ...]:
        """Sizes of the continue sets."""
        return tuple(
            tuple(c - a - b for c, a, b in zip(binomial_row(m), ra, rb))
            for m, ra, rb in zip(self.checkpoints, self.A, self.B)
        )


def decided_floor(count: int, f: Function, x: Fraction, complement: bool = False,
                  max_tighten: int = FLOOR_MAX_TIGHTEN) -> int:
    """``floor(count * f(x))`` (or of ``count * (1 - f(x))``), never guessed.

    Precision is tightened tenfold until the enclosure pins the floor.
    """
    if count == 0:
        return 0
    precision = Fraction(1, 1 << (count.bit_length() + FLOOR_GUARD_BITS))
    for _ in range(max_tighten + 1):
        v = f.evaluate(x, precision)
        if complement:
            v = 1 - v
        lo = (count * v.lo.numerator) // v.lo.denominator
        hi = (count * v.hi.numerator) // v.hi.denominator
        if lo == hi:
            return lo
        precision /= 10
    raise UndecidableFloor(f"cannot decide floor({count} * {f.variant}({x})) within precision cap")


def count_rows(pair: EnvelopePair) -> tuple[list[int], list[int]]:
    m = pair.checkpoint
    row_c = binomial_row(m)
    A = [decided_floor(row_c[k], pair.lower, Fraction(k, m)) for k in range(m + 1)]
    B = [decided_floor(row_c[k], pair.upper, Fraction(k, m), complement=True) for k in range(m + 1)]
    return A, B


def build_count_table(target: Function, envelopes: Sequence[EnvelopePair],
                      *, require_verified: bool = True) -> CountTable:
    """Floor the envelope Bernstein coefficients into a validated CountTable."""
    if require_verified:
        for pair in envelopes:
            if not pair.verified:
                raise EnvelopeUnverified(f"envelope at n={pair.checkpoint} has not been verified")
    checkpoints = [p.checkpoint for p in envelopes]
    rows = [count_rows(p) for p in envelopes]
    return CountTable.from_counts(checkpoints, [r[0] for r in rows], [r[1] for r in rows])
