"""Exact outcome probabilities and expected input-bit cost of a count table."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .numerics import RationalLike, as_rational, binomial_row, convolve
from .tables import CountTable

__all__ = [
    "DEFAULT_STATE_CAP",
    "OutcomeTriple",
    "TooLarge",
    "exact_outcome_probs",
    "expected_bits",
    "path_enumeration_probs",
]

DEFAULT_STATE_CAP = 10**7


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OutcomeTriple:
    """Cumulative probabilities after one checkpoint."""

    checkpoint: int
    p_one: Fraction
    p_zero: Fraction
    p_continue: Fraction

    def as_floats(self) -> tuple[float, float, float]:
        return float(self.p_one), float(self.p_zero), float(self.p_continue)


def _open_unit(p: RationalLike) -> Fraction:
    p = as_rational(p)
    if not 0 < p < 1:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
    return p


def _weighted_sum(row: Sequence[int], u: int, w: int) -> int:
    # sum_k row[k] u^k w^(m-k)
    acc = 0
    upow = 1
    for c in row:
        acc = acc * w + c * upow
        upow *= u
    return acc


def exact_outcome_probs(table: CountTable, p: RationalLike) -> list[OutcomeTriple]:
    """Sum string probabilities over the A and B sets at every checkpoint."""
    p = _open_unit(p)
    u, v = p.numerator, p.denominator
    w = v - u
    out = []
    for m, ra, rb in zip(table.checkpoints, table.A, table.B):
        den = v**m
        one = Fraction(_weighted_sum(ra, u, w), den)
        zero = Fraction(_weighted_sum(rb, u, w), den)
        out.append(OutcomeTriple(m, one, zero, 1 - one - zero))
    return out


def path_enumeration_probs(table: CountTable, p: RationalLike,
                           cap: int = DEFAULT_STATE_CAP) -> list[OutcomeTriple]:
    """Forward dynamic programme over ones-counts using the runner's hazards.

    State ``(i, k)`` carries the probability of reaching checkpoint ``i`` with
    ``k`` ones. At each state the run stops with 1 with probability
    ``new_a / pool`` and with 0 with probability ``new_b / pool``; survivors
    are pushed through the next block of input bits. This never touches the
    raw A/B rows, so it cross-checks the telescoping used by
    :func:`exact_outcome_probs`.
    """
    p = _open_unit(p)
    states = sum(m + 1 for m in table.checkpoints)
    if states > cap:
        raise TooLarge(f"{states} DP states exceed cap {cap}")
    u, v = p.numerator, p.denominator
    w = v - u

    def block_weights(d: int) -> list[int]:
        row = binomial_row(d)
        return [row[j] * u**j * w ** (d - j) for j in range(d + 1)]

    one = zero = Fraction(0)
    out = []
    # survivors are integer numerators over one shared denominator
    survive_num, survive_den = [], 1
    prev_m = 0
    for i, m in enumerate(table.checkpoints):
        if i == 0:
            mass, denom = block_weights(m), v**m
        else:
            mass = convolve(survive_num, block_weights(m - prev_m))
            denom = survive_den * v ** (m - prev_m)
        prev_m = m
        kept, rems = [], {}
        one_num = zero_num = 0
        one_frac = zero_frac = Fraction(0)
        for k in range(m + 1):
            pool = table.pool[i][k]
            if pool == 0:
                if mass[k]:
                    raise ValueError(f"tier {i}, k={k}: mass reaches an empty pool")
                kept.append(0)
                continue
            na, nb = table.new_a[i][k], table.new_b[i][k]
            x = mass[k]
            if x % pool == 0:
                x //= pool
                one_num += x * na
                zero_num += x * nb
                kept.append(x * (pool - na - nb))
            else:
                one_frac += Fraction(x * na, pool)
                zero_frac += Fraction(x * nb, pool)
                rems[k] = Fraction(x * (pool - na - nb), pool)
                kept.append(None)
        one += (one_num + one_frac) / denom
        zero += (zero_num + zero_frac) / denom
        scale = math.lcm(*(r.denominator for r in rems.values())) if rems else 1
        survive_num = [c * scale if c is not None else int(rems[k] * scale) for k, c in enumerate(kept)]
        survive_den = denom * scale
        out.append(OutcomeTriple(m, one, zero, 1 - one - zero))
    return out


def expected_bits(table: CountTable, p: RationalLike) -> Fraction:
    """Truncated mean of input bits: ``sum_i (m_i - m_{i-1}) P(continue after i-1)``.

    A lower bound on the true cost; the residual continue probability at
    the last checkpoint is not charged.
    """
    triples = exact_outcome_probs(table, p)
    total = Fraction(0)
    survive = Fraction(1)
    prev = 0
    for t in triples:
        total += (t.checkpoint - prev) * survive
        survive = t.p_continue
        prev = t.checkpoint
    return total
