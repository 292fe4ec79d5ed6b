"""JSON plan files.

Rationals are stored as ``{"num": "...", "den": "..."}`` string pairs and
counts as decimal strings, so nothing passes through a float. Loading
rebuilds the count table from the envelopes and refuses the file unless the
rebuilt rows equal the stored ones.
"""
from __future__ import annotations

import json
import math
from dataclasses import fields
from fractions import Fraction
from pathlib import Path
from typing import Any

import gmpy2

from . import __version__
from .functions import VARIANTS, Function
from .planner import CascadePlan, descent_from_dict
from .tables import EnvelopePair, InvalidTable, VerificationReport

FORMAT = "bernfactory-plan"
FORMAT_VERSION = 1


class InvalidPlanFile(InvalidTable):
    pass


#: report margins are floored onto this grid; exact margins can run to thousands of digits
MARGIN_GRID = 2**64


def _int_str(n: int) -> str:
    # gmpy2 sidesteps the interpreter's cap on int <-> str digit counts
    return str(gmpy2.mpz(n))


def _str_int(s: str) -> int:
    try:
        return int(gmpy2.mpz(s))
    except (ValueError, TypeError):
        raise InvalidPlanFile(f"not an integer: {s!r}") from None


def rational_to_json(q: Fraction) -> dict:
    q = Fraction(q)
    return {"num": _int_str(q.numerator), "den": _int_str(q.denominator)}


def rational_from_json(d: Any) -> Fraction:
    if not isinstance(d, dict) or set(d) != {"num", "den"}:
        raise InvalidPlanFile(f"expected a {{num, den}} pair, got {d!r}")
    return Fraction(_str_int(d["num"]), _str_int(d["den"]))


def _value_to_json(v: Any) -> Any:
    if isinstance(v, Function):
        return function_to_json(v)
    if isinstance(v, Fraction):
        return rational_to_json(v)
    if isinstance(v, (tuple, list)):
        return [_value_to_json(x) for x in v]
    if isinstance(v, dict):
        return {k: _value_to_json(x) for k, x in v.items()}
    return v


def _value_from_json(v: Any) -> Any:
    if isinstance(v, dict):
        if "variant" in v:
            return function_from_json(v)
        if set(v) == {"num", "den"}:
            return rational_from_json(v)
        return {k: _value_from_json(x) for k, x in v.items()}
    if isinstance(v, list):
        return tuple(_value_from_json(x) for x in v)
    return v


def function_to_json(f: Function) -> dict:
    return {"variant": f.variant,
            "params": {fl.name: _value_to_json(getattr(f, fl.name)) for fl in fields(f)}}


def function_from_json(d: dict) -> Function:
    try:
        cls = VARIANTS[d["variant"]]
    except KeyError:
        raise InvalidPlanFile(f"unknown function variant {d.get('variant')!r}") from None
    params = {k: _value_from_json(v) for k, v in d["params"].items()}
    return cls(**params)


def _floor_margin(q: Fraction) -> Fraction:
    return Fraction(math.floor(q * MARGIN_GRID), MARGIN_GRID)


def _report_to_json(r: VerificationReport | None) -> dict | None:
    if r is None:
        return None
    out = {}
    for fl in fields(r):
        v = getattr(r, fl.name)
        if fl.name.startswith("min_") and isinstance(v, Fraction):
            v = _floor_margin(v)  # still a certified lower bound
        out[fl.name] = _value_to_json(v)
    return out


def _report_from_json(d: dict | None) -> VerificationReport | None:
    if d is None:
        return None
    return VerificationReport(**{k: _value_from_json(v) for k, v in d.items()})


def rows_to_json(rows) -> list[list[str]]:
    return [[_int_str(c) for c in row] for row in rows]


def plan_to_json(plan: CascadePlan) -> dict:
    table = plan.table
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "name": plan.name,
        "target": function_to_json(plan.target),
        "descent": _value_to_json(plan.descent.to_dict()) if plan.descent else None,
        "gluttony": plan.gluttony,
        "checkpoints": list(plan.checkpoints),
        "envelopes": [
            {"checkpoint": e.checkpoint, "lower": function_to_json(e.lower),
             "upper": function_to_json(e.upper), "verification": _report_to_json(e.report)}
            for e in plan.envelopes
        ],
        "counts": {"A": rows_to_json(table.A), "B": rows_to_json(table.B)},
        "provenance": {
            "tool": "bernfactory",
            "version": __version__,
            "verified": plan.verified,
            "modes": [e.report.mode if e.report else None for e in plan.envelopes],
            "notes": _value_to_json(plan.notes),
        },
    }


def plan_from_json(d: dict) -> CascadePlan:
    if d.get("format") != FORMAT:
        raise InvalidPlanFile("not a plan file")
    if d.get("version") != FORMAT_VERSION:
        raise InvalidPlanFile(f"unsupported plan file version {d.get('version')!r}")
    try:
        target = function_from_json(d["target"])
        envelopes = tuple(
            EnvelopePair(function_from_json(e["lower"]), function_from_json(e["upper"]),
                         int(e["checkpoint"]), _report_from_json(e.get("verification")))
            for e in d["envelopes"]
        )
        descent = None
        if d.get("descent"):
            descent = descent_from_dict({k: _value_from_json(v) for k, v in d["descent"].items()})
        notes = _value_from_json(d.get("provenance", {}).get("notes") or {})
        plan = CascadePlan(target, envelopes, descent, d.get("gluttony", "report"),
                           d.get("name", ""), dict(notes))
    except (KeyError, TypeError) as exc:
        raise InvalidPlanFile(f"malformed plan file: {exc}") from exc
    if list(plan.checkpoints) != list(d["checkpoints"]):
        raise InvalidPlanFile("checkpoint list disagrees with the envelopes")
    stored = d["counts"]
    table = plan.table
    if rows_to_json(table.A) != stored["A"] or rows_to_json(table.B) != stored["B"]:
        raise InvalidPlanFile("stored count rows differ from the rebuilt table")
    return plan


def dumps(plan: CascadePlan) -> str:
    return json.dumps(plan_to_json(plan), indent=1) + "\n"


def save(plan: CascadePlan, path: str | Path) -> None:
    Path(path).write_text(dumps(plan), encoding="utf-8", newline="\n")


def load(path: str | Path) -> CascadePlan:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidPlanFile(f"{path}: {exc}") from exc
    return plan_from_json(data)
