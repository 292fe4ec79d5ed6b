"""Cascade planning: descent curves, elbow selection and ready-made plans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Sequence

from .functions import (
    Constant,
    Elbow,
    Function,
    Linear,
    Parabola,
    PiecewiseLinear,
    Power,
    SmoothedElbow,
    fh_envelope,
)
from .numerics import RationalLike, as_rational
from .oracle import exact_outcome_probs
from .tables import (
    CountTable,
    EnvelopePair,
    NestingViolation,
    _knots_valid,
    bernstein_eval,
    build_count_table,
    verify_envelope,
)

__all__ = [
    "CascadePlan",
    "DescentCurve",
    "NoIntersection",
    "NotFound",
    "PointListDescent",
    "QuadraticDescent",
    "QuinticDescent",
    "VerticalDescent",
    "build_plan",
    "choose_checkpoint",
    "constant_plan",
    "elbow_cascade",
    "fh_plan",
    "linear_plan",
    "next_elbow",
    "parabola_cascade",
    "preface_plan",
    "sqrt_power_plan",
    "sqrt_tangent_plan",
    "table2_plan",
]

TABLE2_ELBOWS = (("0.1539", "0.985", 20), ("0.2912", "0.965", 21),
                 ("0.3953", "0.936", 222), ("0.4228", "0.8463", 1223))


ANCHOR_GRID = 10**6
# share of the room between curve start and target kept free at the first tier
HEADROOM_FRACTION = Fraction(3, 4)


def snap(point: tuple[Fraction, Fraction], grid: int = ANCHOR_GRID) -> tuple[Fraction, Fraction]:
    """Round an anchor to ``1/grid`` so envelope values keep small denominators.

    ``x`` rounds up and ``y`` down, so the snapped envelope never rises
    above the unsnapped one.
    """
    x, y = point
    return Fraction(math.ceil(x * grid), grid), Fraction(math.floor(y * grid), grid)


class NoIntersection(ValueError):
    pass


class NotFound(ValueError):
    pass


# ---------------------------------------------------------------------------
# Descent curves
# ---------------------------------------------------------------------------

class DescentCurve:
    """Locus of envelope anchor points, parameterised by ``t`` in ``[0, 1]``.

    ``t = 0`` is the loose end of the curve and ``t = 1`` touches the target.
    """

    kind: str = ""

    def point(self, t: Fraction) -> tuple[Fraction, Fraction]:
        raise NotImplementedError

    def envelope(self, t: Fraction) -> Function:
        return Elbow.through(*snap(self.point(t)))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class QuinticDescent(DescentCurve):
    """``x = x* + (y - y*)/c - kappa (y - y*)^5`` through ``(0, 1)``.

    Its slope at the target corner equals the target slope ``c``, so the
    anchors hug the rising part of the elbow.
    """

    c: Fraction
    eps: Fraction
    kind = "quintic"

    @property
    def corner(self) -> tuple[Fraction, Fraction]:
        return (1 - self.eps) / self.c, 1 - self.eps

    @property
    def kappa(self) -> Fraction:
        x0, y0 = self.corner
        return (x0 + (1 - y0) / self.c) / (1 - y0) ** 5

    def x_of_y(self, y: Fraction) -> Fraction:
        x0, y0 = self.corner
        d = y - y0
        return x0 + d / self.c - self.kappa * d**5

    def slope_at_corner(self) -> Fraction:
        """``dy/dx`` at the target corner."""
        dxdy = 1 / self.c - 5 * self.kappa * 0
        return 1 / dxdy

    def point(self, t):
        t = as_rational(t)
        y = 1 - t * self.eps
        return self.x_of_y(y), y

    def param_of_y(self, y: RationalLike) -> Fraction:
        return (1 - as_rational(y)) / self.eps

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "eps": self.eps}


@dataclass(frozen=True)
class QuadraticDescent(DescentCurve):
    """``y = 1 - (1 - y*) (x / x*)^2`` from ``(0, 1)`` down to the corner."""

    c: Fraction
    eps: Fraction
    kind = "quadratic"

    @property
    def corner(self):
        return (1 - self.eps) / self.c, 1 - self.eps

    def point(self, t):
        t = as_rational(t)
        x0, y0 = self.corner
        return t * x0, 1 - (1 - y0) * t * t

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "eps": self.eps}


@dataclass(frozen=True)
class PointListDescent(DescentCurve):
    """Polyline through explicit anchor points, loose end first."""

    points: tuple[tuple[Fraction, Fraction], ...]
    kind = "points"

    def point(self, t):
        t = as_rational(t)
        segs = len(self.points) - 1
        if segs == 0:
            return self.points[0]
        pos = t * segs
        i = min(int(pos), segs - 1)
        (x0, y0), (x1, y1) = self.points[i], self.points[i + 1]
        s = pos - i
        return x0 + s * (x1 - x0), y0 + s * (y1 - y0)

    def to_dict(self):
        return {"kind": self.kind, "points": [list(p) for p in self.points]}


@dataclass(frozen=True)
class VerticalDescent(DescentCurve):
    """Parabola heights on the line ``x = 1/2``: ``c(t) = start - t (start - target)``."""

    start: Fraction
    target: Fraction
    kind = "vertical"

    def point(self, t):
        t = as_rational(t)
        return Fraction(1, 2), self.start - t * (self.start - self.target)

    def envelope(self, t):
        return Parabola(self.point(t)[1])

    def to_dict(self):
        return {"kind": self.kind, "start": self.start, "target": self.target}


def descent_from_dict(d: dict) -> DescentCurve:
    kind = d["kind"]
    if kind == "quintic":
        return QuinticDescent(as_rational(d["c"]), as_rational(d["eps"]))
    if kind == "quadratic":
        return QuadraticDescent(as_rational(d["c"]), as_rational(d["eps"]))
    if kind == "points":
        return PointListDescent(tuple((as_rational(x), as_rational(y)) for x, y in d["points"]))
    if kind == "vertical":
        return VerticalDescent(as_rational(d["start"]), as_rational(d["target"]))
    raise ValueError(f"unknown descent curve kind {kind!r}")


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadePlan:
    target: Function
    envelopes: tuple[EnvelopePair, ...]
    descent: DescentCurve | None = None
    gluttony: str = "report"
    name: str = ""
    notes: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        ms = [e.checkpoint for e in self.envelopes]
        if not ms:
            raise ValueError("a plan needs at least one checkpoint")
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("envelope checkpoints must strictly increase")

    @property
    def checkpoints(self) -> tuple[int, ...]:
        return tuple(e.checkpoint for e in self.envelopes)

    @property
    def max_checkpoint(self) -> int:
        return self.checkpoints[-1]

    @property
    def verified(self) -> bool:
        return all(e.verified for e in self.envelopes)

    @cached_property
    def table(self) -> CountTable:
        return build_count_table(self.target, self.envelopes, require_verified=False)


def auto_mode(target: Function, pair: EnvelopePair) -> str:
    up, lo = _knots_valid(target, pair)
    return "knots" if up and lo else "grid"


def verify_all(target: Function, pairs: Sequence[EnvelopePair], mode: str | None = None,
               count: int = 1024, raise_on_failure: bool = True) -> tuple[EnvelopePair, ...]:
    return tuple(
        verify_envelope(target, p, mode or auto_mode(target, p), count, raise_on_failure=raise_on_failure)
        for p in pairs
    )


def _reference_points(target: Function, descent: DescentCurve | None) -> tuple[Fraction, ...]:
    if target.knots:
        return tuple(target.knots)
    if isinstance(descent, VerticalDescent):
        return (Fraction(1, 2),)
    return (Fraction(1, 2),)


def _ref_margin(target: Function, env: Function, m: int, points: Sequence[Fraction]) -> Fraction:
    return min(bernstein_eval(env, m, x).lo - target.evaluate(x).hi for x in points)


def _gap(prev: Function, m: int, curve: DescentCurve, t: Fraction) -> Fraction:
    x, y = curve.point(t)
    return bernstein_eval(prev, m, x).lo - y


def next_elbow(prev: EnvelopePair, curve: DescentCurve, tol: RationalLike = Fraction(1, 2**24),
               scan: int = 256) -> tuple[Fraction, Fraction]:
    """Anchor where the previous expansion ``B_m(g)`` meets the curve.

    Scans from the target end of the curve for the first sign change and
    bisects it; the returned point lies on the curve at or below the
    expansion.
    """
    tol = as_rational(tol)
    t_hi = Fraction(1)
    if _gap(prev.upper, prev.checkpoint, curve, t_hi) <= 0:
        raise NoIntersection("the previous expansion lies below the whole descent curve")
    t_lo = None
    for j in range(scan - 1, -1, -1):
        t = Fraction(j, scan)
        if _gap(prev.upper, prev.checkpoint, curve, t) < 0:
            t_lo = t
            break
        t_hi = t
    if t_lo is None:
        raise NoIntersection("the previous expansion lies above the whole descent curve")
    while t_hi - t_lo > tol:
        mid = (t_lo + t_hi) / 2
        if _gap(prev.upper, prev.checkpoint, curve, mid) < 0:
            t_lo = mid
        else:
            t_hi = mid
    return curve.point(t_hi)


def _param_of_point(curve: DescentCurve, point: tuple[Fraction, Fraction]) -> Fraction:
    if isinstance(curve, QuinticDescent):
        return curve.param_of_y(point[1])
    if isinstance(curve, VerticalDescent):
        return (curve.start - point[1]) / (curve.start - curve.target)
    # monotone search along the curve for the other kinds
    lo, hi = Fraction(0), Fraction(1)
    for _ in range(40):
        mid = (lo + hi) / 2
        if curve.point(mid)[1] > point[1]:
            lo = mid
        else:
            hi = mid
    return hi


def choose_checkpoint(target: Function, envelope: Function | tuple, min_m: int = 1,
                      headroom: RationalLike = 0, cap: int = 1 << 16,
                      points: Sequence[Fraction] | None = None) -> int:
    """Smallest ``m >= min_m`` with ``B_m(g) - f >= headroom`` at the reference points.

    The reference points are the knots of ``f`` (the descent abscissa for
    smooth targets). Doubling brackets the answer, bisection pins it; this
    relies on ``B_m(g)`` growing with ``m``, true for concave ``g``.
    """
    if isinstance(envelope, tuple):
        envelope = Elbow.through(*envelope)
    headroom = as_rational(headroom)
    points = tuple(points) if points else _reference_points(target, None)

    def ok(m: int) -> bool:
        return _ref_margin(target, envelope, m, points) >= headroom and \
            bernstein_eval(envelope, m, Fraction(0)).lo >= target.evaluate(0).hi

    for x in points:
        if envelope.evaluate(x).lo - target.evaluate(x).hi <= headroom:
            raise NotFound(f"envelope leaves no room above the target at x={x}")
    m = max(1, min_m)
    if ok(m):
        return m
    lo = m
    while True:
        hi = lo * 2
        if hi > cap:
            if ok(cap):
                hi = cap
                break
            raise NotFound(f"no checkpoint up to {cap} clears the target")
        if ok(hi):
            break
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _nested_checkpoint(target: Function, done: list[EnvelopePair], env: Function, m: int,
                       cap: int) -> int:
    """Increase ``m`` until adding ``env`` at ``m`` keeps the table nested."""
    while m <= cap:
        trial = done + [EnvelopePair(target, env, m)]
        try:
            build_count_table(target, trial, require_verified=False)
            return m
        except NestingViolation:
            m += max(1, m // 8)
    raise NotFound(f"no nested checkpoint up to {cap}")


def _lowest_feasible(target, curve, m, t_min, headroom, points, tol=Fraction(1, 2**20)):
    """Largest ``t >= t_min`` whose envelope still clears the target at order ``m``."""
    def ok(t):
        env = curve.envelope(t)
        try:
            return _ref_margin(target, env, m, points) >= headroom
        except (ValueError, ZeroDivisionError):
            return False
    if t_min == 0:
        t_min = tol  # t = 0 is the degenerate anchor (0, 1)
    if not ok(t_min):
        return None
    lo, hi = t_min, Fraction(1)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_plan(target: Function, descent: DescentCurve | None = None,
               checkpoints: Sequence[int] | None = None, *,
               terminal_residual: RationalLike = Fraction(1, 10**6),
               p_ref: RationalLike = Fraction(1, 100), m1: int = 20, growth: RationalLike = 8,
               headroom: RationalLike | None = None, max_tiers: int = 8, cap: int = 1 << 15,
               verify_mode: str | None = None, grid: int = 1024, name: str = "") -> CascadePlan:
    """Build a verified cascade for ``target``.

    Linear targets need no cascade: the target is its own envelope on both
    sides at every checkpoint. Otherwise each tier's anchor sits where the
    previous expansion crosses the descent curve. The first tier sits at
    ``m1`` with its anchor as low as ``headroom`` allows (default: three
    quarters of the room between the curve start and the target). Later checkpoints grow
    by ``growth``. Before each tier the planner tries closing the cascade
    with the lowest anchor the new order supports; it closes once the
    continue probability at ``p_ref`` falls
    below ``terminal_residual``, or when the next order would pass
    ``cap``. With an explicit checkpoint list each anchor is pushed as far
    down the curve as its order allows.
    """
    terminal_residual = as_rational(terminal_residual)
    p_ref = as_rational(p_ref)
    growth = as_rational(growth)
    if target.shape == "linear":
        if checkpoints is None:
            checkpoints = [m1 * 2**i for i in range(max_tiers)]
        pairs = [EnvelopePair(target, target, m) for m in checkpoints]
        return CascadePlan(target, verify_all(target, pairs, verify_mode, grid), None, name=name)
    if target.shape != "concave":
        raise NotImplementedError("automatic cascades are built for concave targets")
    if descent is None:
        if isinstance(target, Elbow):
            descent = QuinticDescent(target.c, target.eps)
        else:
            raise ValueError("a descent curve is required for this target")
    points = _reference_points(target, descent)
    if headroom is None:
        x0, y0 = descent.point(Fraction(0))
        headroom = min(y0 - target.evaluate(x).hi for x in points) * HEADROOM_FRACTION
    headroom = as_rational(headroom)

    def residual(pairs):
        table = build_count_table(target, pairs, require_verified=False)
        return exact_outcome_probs(table, p_ref)[-1].p_continue

    pairs: list[EnvelopePair] = []
    if checkpoints is not None:
        t_min = Fraction(0)
        for m in checkpoints:
            if pairs:
                t_min = _param_of_point(descent, next_elbow(pairs[-1], descent))
            t = _lowest_feasible(target, descent, m, t_min, headroom if not pairs else 0, points)
            if t is None:
                raise NotFound(f"checkpoint {m} cannot clear the target below the previous expansion")
            env = descent.envelope(t)
            pairs.append(EnvelopePair(target, env, m))
            build_count_table(target, pairs, require_verified=False)  # NestingViolation propagates
        return CascadePlan(target, verify_all(target, pairs, verify_mode, grid), descent, name=name)

    t = _lowest_feasible(target, descent, m1, Fraction(0), headroom, points)
    if t is None:
        raise NotFound(f"no anchor on the curve clears the target at m={m1}")
    pairs.append(EnvelopePair(target, descent.envelope(t), m1))
    while residual(pairs) >= terminal_residual:
        if len(pairs) >= max_tiers:
            raise NotFound(f"residual still above {terminal_residual} after {max_tiers} tiers")
        t_min = _param_of_point(descent, next_elbow(pairs[-1], descent))
        m = math.ceil(pairs[-1].checkpoint * growth)
        if m > cap:
            raise NotFound(f"checkpoints would pass the cap {cap}")
        # try closing the cascade with the lowest anchor this order supports
        t = _lowest_feasible(target, descent, m, t_min, 0, points)
        if t is not None:
            env = descent.envelope(t)
            try:
                mf = _nested_checkpoint(target, pairs, env, m, cap)
            except NotFound:
                mf = None
            if mf is not None:
                trial = pairs + [EnvelopePair(target, env, mf)]
                if residual(trial) < terminal_residual or m * growth > cap:
                    pairs = trial
                    break
        # otherwise an intermediate tier anchored on the previous expansion
        env = descent.envelope(t_min)
        m = max(m, choose_checkpoint(target, env, m, 0, cap, points))
        m = _nested_checkpoint(target, pairs, env, m, cap)
        pairs.append(EnvelopePair(target, env, m))
    verified = verify_all(target, pairs, verify_mode, grid)
    return CascadePlan(target, verified, descent, name=name)


def preface_plan(base: CascadePlan, preface: EnvelopePair, verify_mode: str | None = None,
                 grid: int = 1024) -> CascadePlan:
    """Prepend a looser, shorter envelope pair as a new first tier."""
    if preface.checkpoint >= base.checkpoints[0]:
        raise ValueError("the preface checkpoint must precede the first base checkpoint")
    if not preface.verified:
        preface = verify_envelope(base.target, preface, verify_mode or auto_mode(base.target, preface), grid)
    plan = replace(base, envelopes=(preface,) + tuple(base.envelopes))
    build_count_table(plan.target, plan.envelopes, require_verified=False)
    return plan


# ---------------------------------------------------------------------------
# Ready-made plans
# ---------------------------------------------------------------------------

def constant_plan(c: RationalLike = Fraction(1, 2), checkpoints: Sequence[int] = (2, 4)) -> CascadePlan:
    f = Constant(as_rational(c))
    return build_plan(f, checkpoints=checkpoints, name=f"constant {c}")


def linear_plan(c: RationalLike, h: RationalLike, checkpoints: Sequence[int]) -> CascadePlan:
    f = Linear(as_rational(c), as_rational(h))
    return build_plan(f, checkpoints=checkpoints, name=f"linear {c}+{h}p")


def table2_plan() -> CascadePlan:
    """Four-tier cascade for ``min(2p, 0.8)`` with the printed anchors and checkpoints."""
    f = Elbow(2, Fraction(1, 5))
    pairs = [EnvelopePair(f, Elbow.through(x, y), m) for x, y, m in TABLE2_ELBOWS]
    return CascadePlan(f, verify_all(f, pairs, "knots"), QuinticDescent(f.c, f.eps), name="table2")


def elbow_cascade(c: RationalLike = 2, eps: RationalLike = Fraction(1, 5), **kwargs) -> CascadePlan:
    f = Elbow(as_rational(c), as_rational(eps))
    kwargs.setdefault("name", f"elbow cascade c={c}")
    return build_plan(f, kwargs.pop("descent", QuinticDescent(f.c, f.eps)), **kwargs)


def parabola_cascade(c: RationalLike = Fraction(1, 2), start: RationalLike = Fraction(3, 4), *,
                     terminal_residual: RationalLike = Fraction(1, 10**6),
                     p_ref: RationalLike = Fraction(1, 2), max_tiers: int = 8,
                     grid: int = 1024) -> CascadePlan:
    """Cascade of parabolas ``Parabola(c_i)`` descending on the line ``x = 1/2``.

    The expansion of a parabola is the same parabola shrunk by ``1 - 1/m``,
    so the crossing with ``x = 1/2`` is exactly ``c_i (1 - 1/m_i)``. Taking
    ``m_i = ceil(2 c_i / (c_i - c))`` halves the gap to the target at every
    tier.
    """
    f = Parabola(as_rational(c))
    curve = VerticalDescent(as_rational(start), f.c)
    terminal_residual = as_rational(terminal_residual)
    pairs: list[EnvelopePair] = []
    ci = curve.start
    prev_m = 0
    while len(pairs) < max_tiers:
        m = max(prev_m + 1, math.ceil(2 * ci / (ci - f.c)))
        pairs.append(EnvelopePair(f, Parabola(ci), m))
        table = build_count_table(f, pairs, require_verified=False)
        if exact_outcome_probs(table, p_ref)[-1].p_continue < terminal_residual:
            break
        ci = next_elbow(pairs[-1], curve)[1]
        prev_m = m
    return CascadePlan(f, verify_all(f, pairs, "grid", grid), curve, name=f"parabola cascade c={c}")


def sqrt_power_plan(checkpoints: Sequence[int] = (100, 200, 300),
                    exponents: Sequence[RationalLike] = (Fraction(1, 5), Fraction(1, 3), Fraction(50, 101)),
                    verify: bool = True, grid: int = 1024) -> CascadePlan:
    """Power envelopes ``p^(1/q)`` above the square root.

    Verification runs on a grid and does not raise: near ``p = 0`` no
    expansion of an envelope vanishing at zero can stay above ``sqrt(p)``,
    so failures are recorded in the reports instead.
    """
    f = Power(Fraction(1, 2))
    pairs = [EnvelopePair(f, Power(as_rational(q)), m) for q, m in zip(exponents, checkpoints)]
    if verify:
        pairs = verify_all(f, pairs, "grid", grid, raise_on_failure=False)
    return CascadePlan(f, tuple(pairs), None, name="sqrt power cascade")


TANGENT_ENVELOPE = PiecewiseLinear(((Fraction(0), Fraction(358, 1000)),
                                    (Fraction(321, 350), Fraction(1)), (Fraction(1), Fraction(1))))


def sqrt_tangent_plan(checkpoint: int = 50, grid: int = 1024) -> CascadePlan:
    """Single envelope ``min(0.358 + 0.7 p, 1)`` nearly tangent to ``sqrt`` at 1/2."""
    f = Power(Fraction(1, 2))
    pairs = verify_all(f, [EnvelopePair(f, TANGENT_ENVELOPE, checkpoint)], "grid", grid)
    return CascadePlan(f, pairs, None, name="sqrt tangent")


FH_TARGET = SmoothedElbow(2, Fraction(1, 5), Fraction(1, 6))
FH_PREFACE_ANCHOR = (Fraction(9, 25), Fraction(999, 1000))


def fh_plan(variant: str = "improved", checkpoints: Sequence[int] = (256, 512, 1024),
            preface: EnvelopePair | bool | None = None, target: SmoothedElbow = FH_TARGET,
            grid: int = 1024) -> CascadePlan:
    """Smoothed-elbow plan with the additive (``original``) or multiplicative (``improved``) envelopes.

    ``preface=True`` prepends a 20-bit elbow envelope anchored at
    ``(0.36, 0.999)``, the loosest-sloped anchor on a 0.005 grid that both
    verifies and nests into the improved 256-bit tier.
    """
    pairs = [EnvelopePair(target, fh_envelope(target, m, variant), m) for m in checkpoints]
    plan = CascadePlan(target, verify_all(target, pairs, "grid", grid), None,
                       name=f"fh {variant}" + (" + preface" if preface else ""))
    if preface is True:
        preface = EnvelopePair(target, Elbow.through(*FH_PREFACE_ANCHOR), 20)
    if preface:
        plan = preface_plan(plan, preface, "grid", grid)
    return plan
