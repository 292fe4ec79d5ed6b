import random
from dataclasses import replace
from fractions import Fraction

import pytest

from bernfactory.functions import Constant, Linear
from bernfactory.oracle import TooLarge, exact_outcome_probs, expected_bits, path_enumeration_probs
from bernfactory.tables import EnvelopePair, build_count_table

HALF = Fraction(1, 2)


def rand_p(rng):
    d = rng.randrange(2, 10**6)
    return Fraction(rng.randrange(1, d), d)


def test_constant_triples(table1):
    t = exact_outcome_probs(table1, HALF)
    assert (t[0].p_one, t[0].p_zero, t[0].p_continue) == (Fraction(1, 4), Fraction(1, 4), HALF)
    assert (t[1].p_one, t[1].p_zero, t[1].p_continue) == (Fraction(7, 16), Fraction(7, 16), Fraction(1, 8))


def test_dp_matches_on_toy(table1):
    p = Fraction(1, 3)
    assert path_enumeration_probs(table1, p) == exact_outcome_probs(table1, p)


def test_single_tier_identical():
    f = Linear(Fraction(1, 4), HALF)
    t = build_count_table(f, [EnvelopePair(f, f, 9)], require_verified=False)
    assert path_enumeration_probs(t, Fraction(2, 7)) == exact_outcome_probs(t, Fraction(2, 7))


def mutate(table, name, i, k, delta=1):
    rows = [list(r) for r in getattr(table, name)]
    rows[i][k] += delta
    return replace(table, **{name: tuple(tuple(r) for r in rows)})


def test_mutation_breaks_equality(table1):
    # the spec's corruption: A_2(2) incremented, bypassing validation
    p = Fraction(1, 3)
    bad = mutate(table1, "A", 1, 2)
    assert exact_outcome_probs(bad, p) != path_enumeration_probs(bad, p)


def test_every_single_count_mutation_is_caught(table1):
    p = Fraction(1, 3)
    for name in ("A", "B"):
        for i, m in enumerate(table1.checkpoints):
            for k in range(m + 1):
                bad = mutate(table1, name, i, k)
                assert exact_outcome_probs(bad, p) != path_enumeration_probs(bad, p), (name, i, k)


def test_triples_sum_to_one_and_monotone(table2_plan):
    rng = random.Random(11)
    for _ in range(20):
        p = rand_p(rng)
        triples = exact_outcome_probs(table2_plan.table, p)
        for t in triples:
            assert t.p_one + t.p_zero + t.p_continue == 1
        for a, b in zip(triples, triples[1:]):
            assert b.p_continue <= a.p_continue
            assert b.p_one >= a.p_one and b.p_zero >= a.p_zero


def test_p_one_never_exceeds_f(table2_plan, parabola_plan):
    rng = random.Random(3)
    for plan in (table2_plan, parabola_plan):
        for _ in range(10):
            p = rand_p(rng)
            fp = plan.target.evaluate(p)
            for t in exact_outcome_probs(plan.table, p):
                assert t.p_one <= fp.hi
                assert t.p_one + t.p_continue >= fp.lo


def test_expected_bits():
    f = Constant(HALF)
    t = build_count_table(f, [EnvelopePair(f, f, 6)], require_verified=False)
    assert expected_bits(t, Fraction(1, 9)) == 6


def test_expected_bits_table2(table2_plan):
    p = Fraction(1, 100)
    tr = exact_outcome_probs(table2_plan.table, p)
    eb = expected_bits(table2_plan.table, p)
    assert eb == 20 + 1 * tr[0].p_continue + 201 * tr[1].p_continue + 1001 * tr[2].p_continue
    assert 28 < eb < 35
    # p -> 0: the all-zero prefix stops at tier 1
    assert expected_bits(table2_plan.table, Fraction(1, 10**9)) - 20 < Fraction(1, 10**5)


def test_domain_and_cap(table1):
    for p in (0, 1, Fraction(3, 2)):
        with pytest.raises(ValueError):
            exact_outcome_probs(table1, p)
    with pytest.raises(TooLarge):
        path_enumeration_probs(table1, HALF, cap=5)
