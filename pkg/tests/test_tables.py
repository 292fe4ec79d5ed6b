import math
from fractions import Fraction

import pytest

from bernfactory.functions import Constant, Elbow, Linear, Parabola, Power
from bernfactory.numerics import binomial_row, vandermonde_convolve
from bernfactory.tables import (
    PROOF,
    CountTable,
    EnvelopePair,
    EnvelopeUnverified,
    InvalidTable,
    NestingViolation,
    VerificationFailed,
    bernstein_eval,
    build_count_table,
    verify_envelope,
)

HALF = Fraction(1, 2)
ELBOW = Elbow(2, Fraction(1, 5))


def test_bernstein_examples():
    assert bernstein_eval(Constant(HALF), 4, Fraction(1, 3)).lo == HALF
    for n in (1, 5, 17):
        v = bernstein_eval(Linear(0, 1), n, Fraction(2, 7))
        assert v.lo == v.hi == Fraction(2, 7)
    v = bernstein_eval(Power(2), 2, HALF)
    assert v.lo == v.hi == Fraction(3, 8)


def test_bernstein_of_parabola_shrinks_exactly():
    P = Parabola(Fraction(3, 4))
    for m in (2, 3, 10):
        for j in range(11):
            x = Fraction(j, 10)
            b = bernstein_eval(P, m, x)
            assert b.lo == b.hi


def test_table1_counts(table1):
    assert table1.A == ((0, 1, 0), (0, 2, 3, 2, 0))
    assert table1.B == table1.A
    assert table1.C == ((1, 0, 1), (1, 0, 0, 0, 1))
    assert table1.new_a[1][2] == 1


def test_elbow_first_row_zero_string():
    t = build_count_table(ELBOW, [EnvelopePair(ELBOW, Elbow.through(Fraction("0.1539"), Fraction("0.985")), 20)],
                          require_verified=False)
    assert t.A[0][0] == 0 and t.B[0][0] == 1 and t.pool[0][0] == 1


def test_vandermonde_consistency(table2_plan, constant_plan):
    for t in (table2_plan.table, constant_plan.table):
        for i in range(1, t.tiers):
            d = t.checkpoints[i] - t.checkpoints[i - 1]
            assert list(t.pool[i]) == vandermonde_convolve(t.C[i - 1], d)
            inh = vandermonde_convolve(t.A[i - 1], d)
            assert [a - b for a, b in zip(t.A[i], inh)] == list(t.new_a[i])


def test_hazards_valid(table2_plan):
    t = table2_plan.table
    for i in range(t.tiers):
        for k in range(t.checkpoints[i] + 1):
            assert 0 <= t.new_a[i][k] + t.new_b[i][k] <= t.pool[i][k]


def test_linear_c_rows_are_zero_or_one():
    f = Linear(Fraction(1, 4), HALF)
    for n in (3, 8, 13):
        t = build_count_table(f, [EnvelopePair(f, f, n)], require_verified=False)
        row = binomial_row(n)
        for k, c in enumerate(t.C[0]):
            integral = (row[k] * f.exact(Fraction(k, n))).denominator == 1
            assert c == (0 if integral else 1)


def test_survival_mass_non_increasing(table2_plan):
    t = table2_plan.table
    for p in (Fraction(1, 100), Fraction(1, 3), Fraction(9, 10)):
        u, w = p, 1 - p
        masses = [sum(c * u**k * w**(m - k) for k, c in enumerate(row)) for m, row in zip(t.checkpoints, t.C)]
        assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_concave_target_dominates_its_expansion():
    for n in (3, 20, 64):
        for j in range(65):
            x = Fraction(j, 64)
            assert bernstein_eval(ELBOW, n, x).hi <= ELBOW.exact(x)


def test_from_counts_rejects_bad_tables():
    with pytest.raises(InvalidTable):
        CountTable.from_counts((2, 2), [(0, 1, 0)] * 2, [(0, 1, 0)] * 2)
    with pytest.raises(InvalidTable):
        CountTable.from_counts((2,), [(0, 3, 0)], [(0, 0, 0)])
    with pytest.raises(NestingViolation) as exc:
        CountTable.from_counts((2, 4), [(0, 1, 0), (0, 0, 3, 2, 0)], [(0, 1, 0), (0, 2, 3, 2, 0)])
    assert exc.value.tier == 1 and exc.value.k == 1


def test_build_requires_verification():
    f = Constant(HALF)
    with pytest.raises(EnvelopeUnverified):
        build_count_table(f, [EnvelopePair(f, f, 2)])


def test_verify_examples():
    r = verify_envelope(ELBOW, EnvelopePair(ELBOW, Elbow.through(Fraction("0.1539"), Fraction("0.985")), 20)).report
    assert r.passed and r.label == PROOF
    c = Constant(HALF)
    r = verify_envelope(c, EnvelopePair(c, c, 7), "grid", 64).report
    assert r.passed and r.min_margin == 0


def parabola_passes(n):
    f = Parabola(HALF)
    pair = EnvelopePair(f, Parabola(Fraction(3, 4)), n)
    return verify_envelope(f, pair, "grid", 256, raise_on_failure=False).report.passed


def test_parabola_envelope_threshold():
    # B_n(P_{3/4}) = (1 - 1/n) P_{3/4} clears P_{1/2} iff (1 - 1/n) 3/4 >= 1/2, i.e. n >= 3
    assert [n for n in range(1, 9) if parabola_passes(n)] == list(range(3, 9))
    f = Parabola(HALF)
    with pytest.raises(VerificationFailed) as exc:
        verify_envelope(f, EnvelopePair(f, Parabola(Fraction(3, 4)), 2), "grid", 256)
    assert exc.value.margin.hi < 0


def test_knots_mode_refuses_non_proofs():
    f = Parabola(HALF)
    with pytest.raises(ValueError):
        verify_envelope(f, EnvelopePair(f, Parabola(Fraction(3, 4)), 5), "knots")


def test_floors_are_exact_for_large_rows():
    env = Elbow.through(Fraction("0.4228"), Fraction("0.8463"))
    t = build_count_table(ELBOW, [EnvelopePair(ELBOW, env, 1223)], require_verified=False)
    row = binomial_row(1223)
    for k in (0, 100, 517, 611, 1223):
        x = Fraction(k, 1223)
        assert t.B[0][k] == math.floor(row[k] * (1 - env.exact(x)))
        assert t.A[0][k] == math.floor(row[k] * ELBOW.exact(x))
