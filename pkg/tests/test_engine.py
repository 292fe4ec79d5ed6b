import io
from collections import Counter
from fractions import Fraction

import pytest

from bernfactory.engine import (
    AuxRandom,
    GluttonyError,
    ListBits,
    Outcome,
    SimulatedBits,
    StreamBits,
    VonNeumannAux,
    run_factory,
    sample_many,
    uniform_threshold,
    von_neumann,
)
from bernfactory.functions import Constant
from bernfactory.tables import EnvelopePair, build_count_table

HALF = Fraction(1, 2)


def test_von_neumann_examples():
    out = von_neumann(ListBits([0, 0, 1, 0]))
    assert out.result is Outcome.ONE and out.bits_used == 4
    out = von_neumann(ListBits([0, 1]))
    assert out.result is Outcome.ZERO and out.bits_used == 2
    assert von_neumann(ListBits([1, 1, 0])).result is Outcome.BITS_EXHAUSTED
    assert von_neumann(ListBits([1, 1, 0, 0, 1, 0]), limit=4).result is Outcome.BITS_EXHAUSTED
    with pytest.raises(ValueError):
        von_neumann(ListBits([1, 0]), limit=1)


def test_uniform_threshold_examples():
    # U_1 = 0 already lies below 3/4 - 1/2, so the draw resolves one bit early
    out = uniform_threshold(ListBits([0, 0]), Fraction(3, 4))
    assert out.result is Outcome.ONE
    assert uniform_threshold(ListBits([1, 1]), Fraction(3, 4)).result is Outcome.BITS_EXHAUSTED
    assert uniform_threshold(ListBits([1]), HALF).result is Outcome.BITS_EXHAUSTED
    out = uniform_threshold(ListBits([1, 1]), HALF)
    assert out.result is Outcome.ZERO and out.bits_used == 2
    for bad in (0, 1, Fraction(5, 4)):
        with pytest.raises(ValueError):
            uniform_threshold(ListBits([1]), bad)


def test_uniform_threshold_is_exact():
    # enumerate all 12-bit fair strings: P(One) within 2^-12 of p_out
    p_out = Fraction(5, 7)
    ones = undecided = 0
    for s in range(1 << 12):
        bits = [(s >> (11 - i)) & 1 for i in range(12)]
        r = uniform_threshold(ListBits(bits), p_out).result
        ones += r is Outcome.ONE
        undecided += r is Outcome.BITS_EXHAUSTED
    assert Fraction(ones, 4096) <= p_out <= Fraction(ones + undecided, 4096)


def test_linear_table_terminates_at_first_tier(table1):
    out = run_factory(table1, ListBits([1, 0]), AuxRandom(0))
    assert out.result.terminated and out.tier == 0 and out.bits_used == 2


def test_elbow_all_zero_prefix(table2_plan):
    for seed in range(20):
        out = run_factory(table2_plan.table, ListBits([0] * 20), AuxRandom(seed))
        assert out.result is Outcome.ZERO and out.tier == 0 and out.bits_used == 20


def test_gluttony_policies(table1):
    # 00 then 00 stays in C through both tiers
    out = run_factory(table1, ListBits([0, 0, 0, 0]), AuxRandom(1))
    assert out.result is Outcome.GLUTTONY_LIMIT and out.bits_used == 4
    with pytest.raises(GluttonyError):
        run_factory(table1, ListBits([0, 0, 0, 0]), AuxRandom(1), gluttony="raise")
    with pytest.raises(ValueError):
        run_factory(table1, ListBits([0, 0]), AuxRandom(1), gluttony="truncate")


def test_bits_exhausted_and_budget(table1):
    assert run_factory(table1, ListBits([0, 0, 1]), AuxRandom(0)).result is Outcome.BITS_EXHAUSTED
    assert run_factory(table1, ListBits([0, 0, 0, 0]), AuxRandom(0), max_bits=3).result is Outcome.BITS_EXHAUSTED


def test_stream_bits_msb_first():
    src = StreamBits(io.BytesIO(bytes([0b10110000])))
    assert [src.next_bit() for _ in range(8)] == [1, 0, 1, 1, 0, 0, 0, 0]
    assert src.bits_consumed == 8


def test_simulated_bits_reproducible_and_counted():
    a, b = SimulatedBits(Fraction(1, 3), 42), SimulatedBits(Fraction(1, 3), 42)
    assert [a.next_bit() for _ in range(500)] == [b.next_bit() for _ in range(500)]
    ones = a.take(70000)
    assert a.bits_consumed == 70500
    assert abs(ones / 70000 - 1 / 3) < 0.01


def test_aux_uniformity():
    aux = AuxRandom(7)
    counts = Counter(aux.randbelow(6) for _ in range(60000))
    assert set(counts) == set(range(6))
    assert all(abs(c - 10000) < 500 for c in counts.values())
    big = 3**200
    assert all(0 <= aux.randbelow(big) < big for _ in range(100))
    with pytest.raises(ValueError):
        aux.randbelow(0)


def test_von_neumann_aux_draws_from_input():
    src = SimulatedBits(Fraction(1, 5), 3)
    aux = VonNeumannAux(src)
    draws = [aux.randbelow(5) for _ in range(2000)]
    assert set(draws) == set(range(5))
    assert src.bits_consumed > 2000 * 3 * 2


def test_sample_many_accounting(table2_plan):
    t = table2_plan.table
    s = sample_many(t, Fraction(1, 100), 3000, seed=5)
    assert s.n_one + s.n_zero + s.n_unterminated == s.trials == 3000
    assert sum(s.outcomes.values()) == 3000
    assert set(s.tiers) <= set(range(t.tiers))
    assert s.min_bits in t.checkpoints


def test_bits_used_equals_checkpoint(table2_plan):
    t = table2_plan.table
    src = SimulatedBits(Fraction(1, 3), 9)
    aux = AuxRandom(9)
    for _ in range(300):
        out = run_factory(t, src, aux)
        if out.result.terminated:
            assert out.bits_used == t.checkpoints[out.tier]


def test_determinism(table2_plan):
    t = table2_plan.table
    a = sample_many(t, Fraction(1, 100), 1, seed=123)
    b = sample_many(t, Fraction(1, 100), 1, seed=123)
    assert a.as_dict() == b.as_dict()
    assert sample_many(t, Fraction(1, 10), 500, seed=8).as_dict() == sample_many(t, Fraction(1, 10), 500, seed=8).as_dict()
    with pytest.raises(ValueError):
        sample_many(t, Fraction(1, 10), 0, seed=1)


def test_constant_third_sampler():
    f = Constant(Fraction(1, 3))
    t = build_count_table(f, [EnvelopePair(f, f, m) for m in (4, 8, 16, 32)], require_verified=False)
    s = sample_many(t, HALF, 20000, seed=2)
    assert abs(s.freq_one - 1 / 3) < 4 * (2 / 9 / 20000) ** 0.5 + 1e-3
