"""Samplers that turn input coin flips into output bits.

``run_factory`` walks the checkpoints of a :class:`CountTable`. At tier ``i``
it reads the next ``m_i - m_{i-1}`` input bits, updates the running count of
ones ``k`` and draws a uniform integer below ``pool[i][k]``; the first
``new_a[i][k]`` values mean output 1, the next ``new_b[i][k]`` output 0, the
rest continue. Only integers are compared, so the output law is exact.
"""
from __future__ import annotations

import enum
import random
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

import numpy as np

from .numerics import RationalLike, as_rational
from .tables import CountTable

__all__ = [
    "AuxRandom",
    "BitSource",
    "BitsExhausted",
    "FactoryOutcome",
    "GluttonyError",
    "ListBits",
    "Outcome",
    "SampleSummary",
    "SimulatedBits",
    "StreamBits",
    "VonNeumannAux",
    "run_factory",
    "sample_many",
    "uniform_threshold",
    "von_neumann",
]


class BitsExhausted(Exception):
    """The bit source cannot deliver the requested bits."""


class GluttonyError(RuntimeError):
    """Raised past the last checkpoint when the policy is ``raise``."""


class Outcome(enum.Enum):
    ONE = "one"
    ZERO = "zero"
    BITS_EXHAUSTED = "bits-exhausted"
    GLUTTONY_LIMIT = "gluttony-limit"

    @property
    def terminated(self) -> bool:
        return self in (Outcome.ONE, Outcome.ZERO)


@dataclass(frozen=True)
class FactoryOutcome:
    result: Outcome
    bits_used: int
    tier: int | None = None

    @property
    def bit(self) -> int | None:
        return {Outcome.ONE: 1, Outcome.ZERO: 0}.get(self.result)


# ---------------------------------------------------------------------------
# Bit sources
# ---------------------------------------------------------------------------

class BitSource:
    """Stream of input coin flips with exact consumption accounting."""

    def __init__(self) -> None:
        self.bits_consumed = 0

    def next_bit(self) -> int:
        bit = self._next()
        self.bits_consumed += 1
        return bit

    def take(self, n: int) -> int:
        """Consume ``n`` bits and return how many were ones."""
        ones = 0
        for _ in range(n):
            ones += self.next_bit()
        return ones

    def _next(self) -> int:
        raise NotImplementedError


class ListBits(BitSource):
    """Replays a fixed bit sequence; handy for tests."""

    def __init__(self, bits: Iterable[int]):
        super().__init__()
        self._bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in self._bits):
            raise ValueError("bits must be 0 or 1")

    def _next(self) -> int:
        if self.bits_consumed >= len(self._bits):
            raise BitsExhausted
        return self._bits[self.bits_consumed]


class StreamBits(BitSource):
    """Bits of a byte stream, most significant bit of each byte first."""

    def __init__(self, stream: BinaryIO, chunk: int = 4096):
        super().__init__()
        self._stream = stream
        self._chunk = chunk
        self._buf = b""
        self._pos = 0  # bit offset into _buf

    def _next(self) -> int:
        if self._pos >= 8 * len(self._buf):
            self._buf = self._stream.read(self._chunk)
            self._pos = 0
            if not self._buf:
                raise BitsExhausted
        byte = self._buf[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit


class SimulatedBits(BitSource):
    """Seeded i.i.d. Bernoulli(p) bits for an exact rational ``p``.

    Each bit is ``U < p.numerator`` for ``U`` uniform on
    ``[0, p.denominator)``, so the simulated law is exactly ``p``.
    """

    def __init__(self, p: RationalLike, seed: int | np.random.SeedSequence, chunk: int = 1 << 15):
        super().__init__()
        p = as_rational(p)
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        self.p = p
        self._rng = np.random.default_rng(seed)
        self._chunk = chunk
        self._buf = np.zeros(0, dtype=np.int8)
        self._pos = 0
        self._small = p.denominator < 2**62
        if not self._small:
            self._py = random.Random(int(self._rng.integers(2**63)))

    def _refill(self) -> None:
        if self._small:
            draws = self._rng.integers(0, self.p.denominator, size=self._chunk)
            self._buf = (draws < self.p.numerator).astype(np.int8)
        else:
            u, v = self.p.numerator, self.p.denominator
            self._buf = np.fromiter((self._py.randrange(v) < u for _ in range(self._chunk)),
                                    dtype=np.int8, count=self._chunk)
        self._pos = 0

    def _next(self) -> int:
        if self._pos >= len(self._buf):
            self._refill()
        bit = int(self._buf[self._pos])
        self._pos += 1
        return bit

    def take(self, n: int) -> int:
        ones = 0
        left = n
        while left:
            if self._pos >= len(self._buf):
                self._refill()
            step = min(left, len(self._buf) - self._pos)
            ones += int(self._buf[self._pos:self._pos + step].sum())
            self._pos += step
            left -= step
        self.bits_consumed += n
        return ones


# ---------------------------------------------------------------------------
# Auxiliary randomness
# ---------------------------------------------------------------------------

class AuxRandom:
    """Uniform integers on ``[0, n)`` for arbitrarily large ``n``.

    ``random.Random.randrange`` draws ``n.bit_length()`` random bits and
    rejects values ``>= n``, so every value has probability exactly ``1/n``.
    """

    def __init__(self, seed: int | None = None):
        self._rng = random.Random(seed)

    def randbelow(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be positive")
        return self._rng.randrange(n)


class VonNeumannAux(AuxRandom):
    """Auxiliary draws built from fair bits extracted from the input stream.

    Costs about ``1 / (p (1 - p))`` input bits per fair bit.
    """

    def __init__(self, src: BitSource, limit: int | None = None):
        self._src = src
        self._limit = limit

    def _fair_bit(self) -> int:
        out = von_neumann(self._src, self._limit)
        if out.result is not Outcome.ONE and out.result is not Outcome.ZERO:
            raise BitsExhausted
        return out.bit

    def randbelow(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be positive")
        width = (n - 1).bit_length()
        while True:
            r = 0
            for _ in range(width):
                r = (r << 1) | self._fair_bit()
            if r < n:
                return r


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def von_neumann(src: BitSource, limit: int | None = None) -> FactoryOutcome:
    """Fair coin from a biased one: 10 gives 1, 01 gives 0, 00/11 retry."""
    if limit is not None and limit < 2:
        raise ValueError("limit must allow at least one pair")
    start = src.bits_consumed
    while limit is None or src.bits_consumed - start + 2 <= limit:
        try:
            first = src.next_bit()
            second = src.next_bit()
        except BitsExhausted:
            return FactoryOutcome(Outcome.BITS_EXHAUSTED, src.bits_consumed - start)
        if first != second:
            result = Outcome.ONE if first else Outcome.ZERO
            return FactoryOutcome(result, src.bits_consumed - start, 0)
    return FactoryOutcome(Outcome.BITS_EXHAUSTED, src.bits_consumed - start)


def uniform_threshold(src: BitSource, p_out: RationalLike, limit: int | None = None) -> FactoryOutcome:
    """Bernoulli(p_out) from fair bits by comparing a lazily expanded uniform.

    After ``n`` bits ``U_n = sum_i 2^-i X_i``; output 0 once ``U_n > p_out``
    and 1 once ``U_n < p_out - 2^-n``.
    """
    p_out = as_rational(p_out)
    if not 0 < p_out < 1:
        raise ValueError("p_out must lie strictly between 0 and 1")
    a, b = p_out.numerator, p_out.denominator
    start = src.bits_consumed
    num = 0
    n = 0
    while limit is None or n < limit:
        try:
            bit = src.next_bit()
        except BitsExhausted:
            break
        n += 1
        num = 2 * num + bit
        scale = a << n  # p_out * 2^n * b
        if num * b > scale:
            return FactoryOutcome(Outcome.ZERO, src.bits_consumed - start, 0)
        if (num + 1) * b < scale:
            return FactoryOutcome(Outcome.ONE, src.bits_consumed - start, 0)
    return FactoryOutcome(Outcome.BITS_EXHAUSTED, src.bits_consumed - start)


GLUTTONY_POLICIES = ("report", "raise")


def run_factory(table: CountTable, src: BitSource, aux: AuxRandom,
                max_bits: int | None = None, gluttony: str = "report") -> FactoryOutcome:
    """One factory draw. Never returns a value past the last checkpoint."""
    if gluttony not in GLUTTONY_POLICIES:
        raise ValueError(f"gluttony policy must be one of {GLUTTONY_POLICIES}")
    start = src.bits_consumed
    k = 0
    prev = 0
    for i, m in enumerate(table.checkpoints):
        if max_bits is not None and m > max_bits:
            return FactoryOutcome(Outcome.BITS_EXHAUSTED, src.bits_consumed - start)
        try:
            k += src.take(m - prev)
        except BitsExhausted:
            return FactoryOutcome(Outcome.BITS_EXHAUSTED, src.bits_consumed - start)
        prev = m
        na = table.new_a[i][k]
        nb = table.new_b[i][k]
        if na + nb == 0:
            continue
        u = aux.randbelow(table.pool[i][k])
        if u < na:
            return FactoryOutcome(Outcome.ONE, m, i)
        if u < na + nb:
            return FactoryOutcome(Outcome.ZERO, m, i)
    if gluttony == "raise":
        raise GluttonyError(f"no termination within {prev} bits; the plan needs a longer cascade")
    return FactoryOutcome(Outcome.GLUTTONY_LIMIT, src.bits_consumed - start)


@dataclass
class SampleSummary:
    trials: int
    n_one: int
    n_zero: int
    outcomes: dict[str, int]
    tiers: dict[int, int]
    min_bits: int | None
    mean_bits: float | None
    sd_bits: float | None
    extra: dict = field(default_factory=dict)

    @property
    def n_terminated(self) -> int:
        return self.n_one + self.n_zero

    @property
    def n_unterminated(self) -> int:
        return self.trials - self.n_terminated

    @property
    def freq_one(self) -> float:
        """Share of all trials that output 1 (estimates the oracle's ``p_one``)."""
        return self.n_one / self.trials

    @property
    def freq_one_terminated(self) -> float | None:
        return self.n_one / self.n_terminated if self.n_terminated else None

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "n_one": self.n_one,
            "n_zero": self.n_zero,
            "n_unterminated": self.n_unterminated,
            "freq_one": self.freq_one,
            "freq_one_terminated": self.freq_one_terminated,
            "min_bits": self.min_bits,
            "mean_bits": self.mean_bits,
            "sd_bits": self.sd_bits,
            "outcomes": dict(self.outcomes),
            "tiers": {str(k): v for k, v in sorted(self.tiers.items())},
            **self.extra,
        }


def sample_many(table: CountTable, p: RationalLike, trials: int, seed: int,
                max_bits: int | None = None) -> SampleSummary:
    """Run ``trials`` independent draws with simulated Bernoulli(p) input.

    Bit statistics cover terminated runs only; runs that hit the gluttony
    limit or the bit budget are counted in ``outcomes`` instead.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    bit_seed, aux_seed = np.random.SeedSequence(seed).spawn(2)
    src = SimulatedBits(p, bit_seed)
    aux = AuxRandom(int(aux_seed.generate_state(2, dtype=np.uint64)[0]))
    outcomes: Counter = Counter()
    tiers: Counter = Counter()
    bits = []
    for _ in range(trials):
        out = run_factory(table, src, aux, max_bits=max_bits)
        outcomes[out.result.value] += 1
        if out.result.terminated:
            tiers[out.tier] += 1
            bits.append(out.bits_used)
    return SampleSummary(
        trials=trials,
        n_one=outcomes[Outcome.ONE.value],
        n_zero=outcomes[Outcome.ZERO.value],
        outcomes=dict(outcomes),
        tiers=dict(tiers),
        min_bits=min(bits) if bits else None,
        mean_bits=statistics.fmean(bits) if bits else None,
        sd_bits=statistics.pstdev(bits) if len(bits) > 1 else (0.0 if bits else None),
    )
