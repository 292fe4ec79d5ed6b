"""Shared plan fixtures. The shipped plans take seconds to build, so each is built once."""
from fractions import Fraction

import pytest

from bernfactory import planner
from bernfactory.functions import Constant
from bernfactory.tables import EnvelopePair, build_count_table


@pytest.fixture(scope="session")
def table1():
    f = Constant(Fraction(1, 2))
    return build_count_table(f, [EnvelopePair(f, f, 2), EnvelopePair(f, f, 4)], require_verified=False)


@pytest.fixture(scope="session")
def constant_plan():
    return planner.constant_plan()


@pytest.fixture(scope="session")
def table2_plan():
    return planner.table2_plan()


@pytest.fixture(scope="session")
def elbow_plan():
    return planner.elbow_cascade()


@pytest.fixture(scope="session")
def parabola_plan():
    return planner.parabola_cascade()


@pytest.fixture(scope="session")
def sqrt_power_plan():
    return planner.sqrt_power_plan()


@pytest.fixture(scope="session")
def sqrt_tangent_plan():
    return planner.sqrt_tangent_plan()


@pytest.fixture(scope="session")
def fh_original_plan():
    return planner.fh_plan("original")


@pytest.fixture(scope="session")
def fh_improved_plan():
    return planner.fh_plan("improved")


@pytest.fixture(scope="session")
def fh_preface_plan(fh_improved_plan):
    pre = EnvelopePair(fh_improved_plan.target, planner.Elbow.through(*planner.FH_PREFACE_ANCHOR), 20)
    return planner.preface_plan(fh_improved_plan, pre, "grid")


def pytest_terminal_summary(terminalreporter):
    import sys

    results = None
    for mod in list(sys.modules.values()):
        results = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if results:
            break
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(results):
        parts = results[crit]
        ok = all(p[1] for p in parts)
        failed = "; ".join(f"{name}: {detail}" for name, good, detail in parts if not good)
        summary = "; ".join(f"{name}: {detail}" for name, good, detail in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} - {failed if not ok else summary}")
