from fractions import Fraction

import pytest

from bernfactory import planner
from bernfactory.functions import Constant, Elbow, Power
from bernfactory.oracle import exact_outcome_probs
from bernfactory.planner import (
    FH_PREFACE_ANCHOR,
    NoIntersection,
    NotFound,
    QuinticDescent,
    build_plan,
    choose_checkpoint,
    next_elbow,
    preface_plan,
)
from bernfactory.tables import EnvelopePair, NestingViolation, VerificationFailed, bernstein_eval, build_count_table, verify_envelope

ELBOW = Elbow(2, Fraction(1, 5))
CURVE = QuinticDescent(2, Fraction(1, 5))
T1 = (Fraction("0.1539"), Fraction("0.985"))


def test_quintic_curve_shape():
    assert CURVE.point(Fraction(0))[1] == 1
    assert CURVE.point(Fraction(1)) == CURVE.corner == ELBOW.corner
    assert CURVE.slope_at_corner() == 2


def test_next_elbow_reproduces_table2_row2():
    prev = EnvelopePair(ELBOW, Elbow.through(*T1), 20)
    x, y = next_elbow(prev, CURVE)
    assert abs(x - Fraction("0.2912")) < Fraction(1, 1000)
    assert abs(y - Fraction("0.965")) < Fraction(1, 1000)
    assert y < T1[1]


def test_next_elbow_degenerate():
    with pytest.raises(NoIntersection):
        next_elbow(EnvelopePair(ELBOW, ELBOW, 20), CURVE)


def test_choose_checkpoint():
    assert choose_checkpoint(ELBOW, T1) <= 20
    with pytest.raises(NotFound):
        choose_checkpoint(ELBOW, ELBOW.corner, cap=1 << 12)
    ms = [choose_checkpoint(ELBOW, T1, headroom=h) for h in (0, Fraction(1, 20), Fraction(1, 10), Fraction(3, 20))]
    assert ms == sorted(ms)


def test_constant_plan_collapses(constant_plan):
    for e in constant_plan.envelopes:
        assert e.lower == e.upper == Constant(Fraction(1, 2))
    assert constant_plan.checkpoints == (2, 4)
    assert constant_plan.verified


def test_table2_plan(table2_plan):
    assert table2_plan.checkpoints == (20, 21, 222, 1223)
    assert all(e.report.label == "PROOF" for e in table2_plan.envelopes)
    pc = [t.p_continue for t in exact_outcome_probs(table2_plan.table, Fraction(1, 100))]
    assert abs(pc[0] - Fraction("0.04898")) < Fraction("0.0001")
    assert abs(pc[1] - Fraction("0.01881")) < Fraction("0.0001")


def _cascade_property(plan, count=64):
    for a, b in zip(plan.envelopes, plan.envelopes[1:]):
        for j in range(count + 1):
            x = Fraction(j, count)
            assert bernstein_eval(b.upper, b.checkpoint, x).hi <= bernstein_eval(a.upper, a.checkpoint, x).lo + \
                Fraction(1, 10**12), (a.checkpoint, b.checkpoint, x)


def test_cascade_property(table2_plan, elbow_plan, parabola_plan):
    for plan in (table2_plan, elbow_plan, parabola_plan):
        _cascade_property(plan)


def test_auto_elbow_plan(elbow_plan):
    assert elbow_plan.verified
    assert elbow_plan.checkpoints[0] == 20
    assert len(elbow_plan.checkpoints) >= 3
    assert exact_outcome_probs(elbow_plan.table, Fraction(1, 100))[-1].p_continue < Fraction(1, 10**6)
    assert elbow_plan.descent is not None


def test_parabola_plan(parabola_plan):
    assert parabola_plan.verified
    assert parabola_plan.checkpoints == (6, 10, 18, 34, 66, 130, 258, 514)
    pc = [t.p_continue for t in exact_outcome_probs(parabola_plan.table, Fraction(1, 2))]
    assert all(b < a for a, b in zip(pc, pc[1:]))


def test_sqrt_plans(sqrt_power_plan, sqrt_tangent_plan):
    assert sqrt_power_plan.checkpoints == (100, 200, 300)
    reports = [e.report for e in sqrt_power_plan.envelopes]
    assert reports[0].passed
    # no envelope vanishing at 0 has an expansion above sqrt(p) near 0
    assert not reports[1].passed and reports[1].witness_upper < Fraction(1, 100)
    assert sqrt_tangent_plan.verified and sqrt_tangent_plan.checkpoints == (50,)


def test_sqrt_power_failure_is_real():
    f = Power(Fraction(1, 2))
    x = Fraction(1, 1024)
    assert bernstein_eval(Power(Fraction(1, 3)), 200, x).hi < f.evaluate(x).lo


def test_fh_plans(fh_original_plan, fh_improved_plan, fh_preface_plan):
    assert fh_original_plan.checkpoints == fh_improved_plan.checkpoints == (256, 512, 1024)
    assert fh_original_plan.verified and fh_improved_plan.verified
    assert fh_preface_plan.checkpoints == (20, 256, 512, 1024)
    assert fh_preface_plan.verified
    build_count_table(fh_preface_plan.target, fh_preface_plan.envelopes)


def test_preface_errors(fh_improved_plan):
    f = fh_improved_plan.target
    with pytest.raises(ValueError):
        preface_plan(fh_improved_plan, fh_improved_plan.envelopes[0])
    low = EnvelopePair(f, Elbow.through(Fraction(2, 5), Fraction(7, 10)), 20)
    with pytest.raises(VerificationFailed):
        preface_plan(fh_improved_plan, low, "grid", 64)
    assert FH_PREFACE_ANCHOR[1] < 1


def test_explicit_nesting_violation_propagates():
    # Table 2's first anchor at 20 bits is too loose to nest into the improved 256-bit tier
    f = planner.FH_TARGET
    pre = verify_envelope(f, EnvelopePair(f, Elbow.through(*T1), 20), "grid", 64)
    base = planner.CascadePlan(f, tuple(EnvelopePair(f, planner.fh_envelope(f, m, "improved"), m)
                                        for m in (256,)), None)
    with pytest.raises(NestingViolation):
        preface_plan(base, pre)


def test_non_concave_target_rejected():
    with pytest.raises(NotImplementedError):
        build_plan(Power(2), QuinticDescent(2, Fraction(1, 5)))
