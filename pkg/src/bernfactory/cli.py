"""Command-line front end: ``bernfactory {plan,verify,table,bench,sample,curves}``.

Exit codes: 0 success, 2 validation failure, 3 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from fractions import Fraction
from typing import Sequence

from . import planfile
from .engine import AuxRandom, BitsExhausted, StreamBits, run_factory, sample_many
from .functions import (
    Constant,
    Elbow,
    Function,
    Linear,
    Parabola,
    PiecewiseLinear,
    Power,
    SmoothedElbow,
)
from .numerics import as_rational
from .oracle import exact_outcome_probs
from .planner import (
    CascadePlan,
    NoIntersection,
    NotFound,
    QuadraticDescent,
    QuinticDescent,
    auto_mode,
    build_plan,
    constant_plan,
    elbow_cascade,
    fh_plan,
    parabola_cascade,
    sqrt_power_plan,
    sqrt_tangent_plan,
    table2_plan,
    verify_all,
)
from .tables import (EnvelopePair, EnvelopeUnverified, InvalidTable, VerificationFailed, bernstein_eval,
                     verify_envelope)

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 2, 3

PRESETS = {
    "table2": table2_plan,
    "elbow": elbow_cascade,
    "constant": constant_plan,
    "parabola": parabola_cascade,
    "sqrt-power": sqrt_power_plan,
    "sqrt-tangent": sqrt_tangent_plan,
    "fh-original": lambda: fh_plan("original"),
    "fh-improved": lambda: fh_plan("improved"),
    "fh-preface": lambda: fh_plan("improved", preface=True),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------

def _rat(text: str) -> Fraction:
    try:
        return as_rational(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a rational number: {text!r}") from None


def _rat_list(text: str) -> list[Fraction]:
    return [_rat(t) for t in text.split(",") if t.strip()]


def _open_p(text: str) -> list[Fraction]:
    ps = _rat_list(text)
    if not ps:
        raise UsageError("--p needs at least one value")
    for p in ps:
        if not 0 < p < 1:
            raise UsageError(f"p must lie strictly between 0 and 1, got {p}")
    return ps


def parse_function(spec: str) -> Function:
    """``elbow:2,1/5``, ``constant:1/2``, ``linear:1/4,1/2``, ``parabola:1/2``,
    ``sqrt``, ``power:1/3``, ``smoothed-elbow:2,1/5,1/6`` (alias ``fh``),
    ``elbow-through:0.1539,0.985`` or ``piecewise:0:0.358;321/350:1;1:1``."""
    name, _, args = spec.strip().partition(":")
    name = name.lower()
    try:
        if name == "sqrt":
            return Power(Fraction(1, 2))
        if name == "piecewise":
            pts = tuple(tuple(_rat(v) for v in pt.split(":")) for pt in args.split(";"))
            return PiecewiseLinear(pts)
        vals = _rat_list(args)
        ctor = {
            "elbow": Elbow, "constant": Constant, "linear": Linear, "parabola": Parabola,
            "power": Power, "smoothed-elbow": SmoothedElbow, "fh": SmoothedElbow,
            "elbow-through": Elbow.through,
        }.get(name)
        if ctor is None:
            raise UsageError(f"unknown function {name!r}")
        if name == "fh" and not vals:
            vals = [Fraction(2), Fraction(1, 5), Fraction(1, 6)]
        return ctor(*vals)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad function spec {spec!r}: {exc}") from None


_ENVELOPE_RE = re.compile(r"\s*([^@]+)@(\d+)\s*(?:,|$)")


def parse_envelopes(text: str) -> list[tuple[Function, int]]:
    """``power:1/5@100,power:1/3@200`` into ``[(Power(1/5), 100), ...]``."""
    out = []
    pos = 0
    while pos < len(text):
        m = _ENVELOPE_RE.match(text, pos)
        if not m:
            raise UsageError(f"bad envelope list near {text[pos:]!r}")
        out.append((parse_function(m.group(1)), int(m.group(2))))
        pos = m.end()
    if not out:
        raise UsageError("empty envelope list")
    return out


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"not an integer list: {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise UsageError("checkpoints must be positive integers")
    return vals


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(q: Fraction, decimals: int) -> str:
    """Exact decimal rendering; values below ``10**-3`` switch to scientific notation."""
    q = Fraction(q)
    if q == 0 or abs(q) >= Fraction(1, 1000):
        scaled = round(q * 10**decimals)
        sign = "-" if scaled < 0 else ""
        digits = str(abs(scaled)).rjust(decimals + 1, "0")
        return f"{sign}{digits[:-decimals] or '0'}.{digits[-decimals:]}" if decimals else f"{sign}{digits}"
    sign = "-" if q < 0 else ""
    q = abs(q)
    exp = len(str(q.numerator)) - len(str(q.denominator))
    if q < Fraction(10) ** exp:
        exp -= 1
    mant = round(q / Fraction(10) ** exp * 10 ** (decimals - 1))
    if mant >= 10**decimals:
        mant //= 10
        exp += 1
    digits = str(mant)
    return f"{sign}{digits[0]}.{digits[1:]}e{exp:+03d}" if decimals > 1 else f"{sign}{digits}e{exp:+03d}"


def _anchor(f: Function) -> tuple[Fraction | None, Fraction | None]:
    if isinstance(f, Elbow):
        return f.corner
    return None, None


def _write_rows(header: list[str], rows: list[list[str]], as_csv: bool, out) -> None:
    if as_csv:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    out.write("  ".join(h.rjust(w) for h, w in zip(header, widths)) + "\n")
    for r in rows:
        out.write("  ".join(c.rjust(w) for c, w in zip(r, widths)) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _print_plan_summary(plan: CascadePlan, out) -> None:
    p_ref = Fraction(1, 100) if not isinstance(plan.target, Parabola) else Fraction(1, 2)
    triples = exact_outcome_probs(plan.table, p_ref)
    out.write(f"plan {plan.name or '(unnamed)'}: {len(plan.envelopes)} tiers, checkpoints {list(plan.checkpoints)}\n")
    for e, t in zip(plan.envelopes, triples):
        r = e.report
        status = "unverified" if r is None else f"{r.label} {r.mode} {'pass' if r.passed else 'FAIL'}"
        margin = "" if r is None else (f" interior margin upper {float(r.min_interior_margin_upper):.4g}"
                                       f" lower {float(r.min_interior_margin_lower):.4g}")
        out.write(f"  m={e.checkpoint}: {status}{margin}; P(continue | p={p_ref}) = {render(t.p_continue, 5)}\n")


def cmd_plan(args, out) -> int:
    if args.preset:
        plan = PRESETS[args.preset]()
    else:
        if not args.target:
            raise UsageError("--target or --preset is required")
        target = parse_function(args.target)
        if args.elbows_from_table2:
            if not isinstance(target, Elbow) or target != Elbow(2, Fraction(1, 5)):
                raise UsageError("--elbows-from-table2 needs --target elbow:2,1/5")
            plan = table2_plan()
        elif args.envelopes:
            lower = target if target.shape in ("concave", "linear") else None
            pairs = []
            for env, m in parse_envelopes(args.envelopes):
                if lower is None:
                    raise UsageError("explicit envelopes are supported for concave and linear targets")
                pairs.append(EnvelopePair(lower, env, m))
            pairs = [EnvelopePair(p.lower, p.upper, p.checkpoint) for p in pairs]
            verified = verify_all(target, pairs, None if args.verify_mode == "auto" else args.verify_mode,
                                  args.grid, raise_on_failure=not args.allow_unverified)
            plan = CascadePlan(target, verified, None, name=args.name or args.target)
        else:
            checkpoints = _int_list(args.checkpoints) if args.checkpoints else None
            descent = None
            if args.descent and hasattr(target, "eps"):
                descent = (QuinticDescent if args.descent == "quintic" else QuadraticDescent)(target.c, target.eps)
            if isinstance(target, Parabola) and checkpoints is None:
                plan = parabola_cascade(target.c, terminal_residual=args.terminal_residual)
            else:
                kwargs = dict(terminal_residual=args.terminal_residual, p_ref=args.p_ref, m1=args.m1,
                              growth=args.growth, name=args.name or args.target)
                if args.headroom is not None:
                    kwargs["headroom"] = args.headroom
                plan = build_plan(target, descent, checkpoints, **kwargs)
    _print_plan_summary(plan, out)
    if args.out:
        planfile.save(plan, args.out)
        out.write(f"wrote {args.out}\n")
    else:
        out.write(planfile.dumps(plan))
    return EXIT_OK if plan.verified else EXIT_INVALID


def cmd_verify(args, out) -> int:
    plan = planfile.load(args.plan)
    ok = True
    for e in plan.envelopes:
        mode = auto_mode(plan.target, e) if args.mode == "auto" else args.mode
        try:
            r = verify_envelope(plan.target, e, mode, args.grid, raise_on_failure=False).report
        except ValueError as exc:
            out.write(f"m={e.checkpoint}: {exc}\n")
            ok = False
            continue
        ok &= r.passed
        out.write(f"m={e.checkpoint}: {r.label} {r.mode} {'pass' if r.passed else 'FAIL'} "
                  f"({r.points} points) upper min {float(r.min_margin_upper):.6g} at p={r.witness_upper}, "
                  f"lower min {float(r.min_margin_lower):.6g} at p={r.witness_lower}\n")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_table(args, out) -> int:
    plan = planfile.load(args.plan)
    ps = _open_p(args.p)
    d = args.decimals
    header = ["p", "tier", "m", "elbow_x", "elbow_y", "p_one", "p_zero", "p_continue",
              "expected_bits", "terminal_residual"]
    rows = []
    for p in ps:
        triples = exact_outcome_probs(plan.table, p)
        residual = triples[-1].p_continue
        survive, cost, prev = Fraction(1), Fraction(0), 0
        for i, (e, t) in enumerate(zip(plan.envelopes, triples), 1):
            cost += (t.checkpoint - prev) * survive
            survive, prev = t.p_continue, t.checkpoint
            x, y = _anchor(e.upper)
            rows.append([str(p), str(i), str(t.checkpoint),
                         "" if x is None else render(x, d), "" if y is None else render(y, d),
                         render(t.p_one, d), render(t.p_zero, d), render(t.p_continue, d),
                         render(cost, d), render(residual, d)])
    _write_rows(header, rows, args.csv, out)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    ps = _open_p(args.p)
    header = ["plan", "p", "trials", "freq_one", "oracle_p_one", "unterminated",
              "min_bits", "mean_bits", "sd_bits"]
    rows = []
    for path in args.plans:
        plan = planfile.load(path)
        for p in ps:
            s = sample_many(plan.table, p, args.trials, args.seed, max_bits=args.max_bits)
            oracle = exact_outcome_probs(plan.table, p)[-1].p_one
            rows.append([plan.name or path, str(p), str(s.trials), f"{s.freq_one:.6f}",
                         render(oracle, 6), str(s.n_unterminated),
                         "" if s.min_bits is None else str(s.min_bits),
                         "" if s.mean_bits is None else f"{s.mean_bits:.2f}",
                         "" if s.sd_bits is None else f"{s.sd_bits:.2f}"])
    _write_rows(header, rows, args.csv, out)
    return EXIT_OK


def cmd_sample(args, out) -> int:
    plan = planfile.load(args.plan)
    if args.bits:
        stream = sys.stdin.buffer if args.bits == "-" else open(args.bits, "rb")
        with stream:
            try:
                res = run_factory(plan.table, StreamBits(stream), AuxRandom(args.seed), max_bits=args.max_bits)
            except BitsExhausted as exc:
                out.write(f"bits exhausted: {exc}\n")
                return EXIT_INVALID
        out.write(json.dumps({"result": res.result.name, "bits_used": res.bits_used, "tier": res.tier}) + "\n")
        return EXIT_OK
    if args.p is None:
        raise UsageError("sample needs --p or --bits")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    (p,) = _open_p(args.p)[:1]
    s = sample_many(plan.table, p, args.trials, args.seed, max_bits=args.max_bits)
    summary = s.as_dict()
    summary["oracle_p_one"] = render(exact_outcome_probs(plan.table, p)[-1].p_one, 10)
    summary["oracle_residual"] = render(exact_outcome_probs(plan.table, p)[-1].p_continue, 10)
    out.write(json.dumps(summary, indent=1, default=str) + "\n")
    return EXIT_OK


def cmd_curves(args, out) -> int:
    plan = planfile.load(args.plan)
    if args.density < 1:
        raise UsageError("--density must be at least 1")
    prec = Fraction(1, 10 ** (args.decimals + 3))
    header = ["p", "f"]
    for i, e in enumerate(plan.envelopes, 1):
        header += [f"envelope_{i}_m{e.checkpoint}", f"bernstein_{i}_m{e.checkpoint}"]
    rows = []
    for j in range(args.density + 1):
        p = Fraction(j, args.density)
        row = [str(p), render(plan.target.evaluate(p, prec).mid, args.decimals)]
        for e in plan.envelopes:
            row.append(render(e.upper.evaluate(p, prec).mid, args.decimals))
            row.append(render(bernstein_eval(e.upper, e.checkpoint, p, prec).mid, args.decimals))
        rows.append(row)
    _write_rows(header, rows, True, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bernfactory", description="Exact Bernoulli factories from cascading envelopes.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="build, verify and save a plan")
    p.add_argument("--target", help="factory function, e.g. elbow:2,1/5, constant:1/2, sqrt")
    p.add_argument("--preset", choices=sorted(PRESETS), help="write one of the shipped plans")
    p.add_argument("--elbows-from-table2", action="store_true",
                   help="use the published four-tier elbow cascade (20, 21, 222, 1223)")
    p.add_argument("--envelopes", help="explicit upper envelopes, e.g. power:1/5@100,power:1/3@200")
    p.add_argument("--checkpoints", help="explicit checkpoint list, e.g. 2,4")
    p.add_argument("--descent", choices=["quintic", "quadratic"], default="quintic")
    p.add_argument("--terminal-residual", type=_rat, default=Fraction(1, 10**6))
    p.add_argument("--p-ref", type=_rat, default=Fraction(1, 100))
    p.add_argument("--m1", type=int, default=20)
    p.add_argument("--growth", type=_rat, default=Fraction(8))
    p.add_argument("--headroom", type=_rat)
    p.add_argument("--verify-mode", choices=["auto", "knots", "grid"], default="auto")
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--allow-unverified", action="store_true",
                   help="write the plan even if an envelope fails verification (exit code stays 2)")
    p.add_argument("--name")
    p.add_argument("--out", help="output path (default: standard output)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("verify", help="re-verify every envelope of a plan")
    p.add_argument("plan")
    p.add_argument("--mode", choices=["auto", "knots", "grid"], default="auto")
    p.add_argument("--grid", type=int, default=1024)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("table", help="exact outcome probabilities per checkpoint")
    p.add_argument("plan")
    p.add_argument("--p", required=True, help="comma-separated rationals in (0, 1)")
    p.add_argument("--decimals", type=int, default=5)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("bench", help="compare bit costs across plans")
    p.add_argument("plans", nargs="+")
    p.add_argument("--p", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-bits", type=int)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sample", help="run the factory")
    p.add_argument("plan")
    p.add_argument("--p", help="simulate input coins with this bias")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bits", help="read input bits MSB-first from this file ('-' for stdin)")
    p.add_argument("--max-bits", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("curves", help="CSV of target, envelopes and expansions on a grid")
    p.add_argument("plan")
    p.add_argument("--density", type=int, default=100, help="grid intervals; density+1 rows")
    p.add_argument("--decimals", type=int, default=8)
    p.set_defaults(func=cmd_curves)
    return ap


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except UsageError as exc:
        sys.stderr.write(f"bernfactory: usage error: {exc}\n")
        return EXIT_USAGE
    except (VerificationFailed, InvalidTable, EnvelopeUnverified, NotFound, NoIntersection) as exc:
        sys.stderr.write(f"bernfactory: {type(exc).__name__}: {exc}\n")
        return EXIT_INVALID
    except FileNotFoundError as exc:
        sys.stderr.write(f"bernfactory: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
