"""Command-line front end.

Subcommands: eval, accuracy, exhaustive, scan, invariants, bench. Every
report embeds the metadata needed to reproduce it (interval, count, seed,
PRNG id, precision, tool version). Output formats: markdown table (md,
default), csv, json. Hex-float notation is the canonical way values are
printed; decimal input is accepted but rounded to the target format.

Exit codes: 0 success, 1 invariant violation, 2 usage or domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

from . import __version__
from . import algos, harness, oracle
from .algos import AlgorithmId, DomainError
from .fp import BINARY32, BINARY64, Precision
from .harness import PRNG_ID, SamplePlan

__all__ = ["main", "build_parser", "canonical_json", "hexfmt"]

_PRECISIONS = {"b32": BINARY32, "b64": BINARY64}

# Kernels whose weak-rounding guarantee makes >1 ulp a hard failure.
_WEAKLY_ROUNDED = (
    AlgorithmId.NEWTON,
    AlgorithmId.HALLEY,
    AlgorithmId.RCP_SQRT_331D_HALLEY,
)


def hexfmt(v: float | None) -> str | None:
    """float.hex() with insignificant trailing zeros removed."""
    if v is None:
        return None
    h = v.hex()
    if "." in h and "p" in h:
        mant, _, exp = h.partition("p")
        mant = mant.rstrip("0").rstrip(".")
        h = f"{mant}p{exp}"
    return h


def parse_float_literal(text: str, prec: Precision) -> float:
    """Accept decimal or hex-float notation.

    Hex literals must be exactly representable at the target precision
    (they are bit patterns); decimal literals are rounded to it.
    """
    t = text.strip().lower()
    if t.startswith(("0x", "+0x", "-0x")):
        v = float.fromhex(t)
        if prec.p == 24 and algos._round_b32(v) != v:
            raise ValueError(f"{text!r} is not exactly representable in binary32")
        return v
    v = float(t)
    if prec.p == 24:
        v = algos._round_b32(v)
    return v


def _parse_interval(text: str, prec: Precision) -> tuple[float, float]:
    lo_s, sep, hi_s = text.partition(":")
    if not sep:
        raise ValueError(f"interval must look like LO:HI, got {text!r}")
    return parse_float_literal(lo_s, prec), parse_float_literal(hi_s, prec)


def _parse_algos(text: str) -> tuple[AlgorithmId, ...]:
    return tuple(AlgorithmId.parse(part) for part in text.split(","))


def canonical_json(obj) -> str:
    """The one serialization used everywhere, so reports byte-round-trip."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _hist_row(h: harness.UlpHistogram) -> dict:
    return {
        "algo": h.algorithm.value,
        "zero_ulp": h.zero_ulp,
        "one_ulp": h.one_ulp,
        "two_plus_ulp": h.two_plus_ulp,
        "unfaithful": h.unfaithful,
        "total": h.total,
        "zero_pct": round(h.zero_pct, 3),
        "one_pct": round(h.one_pct, 3),
        "two_plus_pct": round(h.two_plus_pct, 3),
        "worst_x_hex": hexfmt(h.worst_x),
        "worst_ulp": h.worst_ulp,
    }


def _envelope(command: str, prec: Precision, plan: dict | None,
              rows: list[dict], wall_ms: int, **extra) -> dict:
    env = {
        "version": __version__,
        "command": command,
        "precision": prec.name,
        "plan": plan,
        "fma_ok": algos.fma_sanity_check(prec),
        "rows": rows,
        "wall_ms": wall_ms,
    }
    env.update(extra)
    return env


def _plan_dict(plan: SamplePlan) -> dict:
    return {
        "interval": [hexfmt(plan.lo), hexfmt(plan.hi)],
        "count": plan.count,
        "seed": plan.seed,
        "prng": PRNG_ID,
        "algorithms": [a.value for a in plan.algorithms],
    }


_HIST_COLUMNS = [
    ("algo", "algo", ""),
    ("zero_pct", "zero ulp %", ".3f"),
    ("one_pct", "one ulp %", ".3f"),
    ("two_plus_pct", ">1 ulp %", ".3f"),
    ("unfaithful", "unfaithful", ""),
    ("total", "total", ""),
    ("worst_x_hex", "worst x", ""),
    ("worst_ulp", "worst ulp", ""),
]


def _md_table(columns, rows) -> str:
    header = "| " + " | ".join(title for _, title, _ in columns) + " |"
    rule = "|" + "|".join("---" for _ in columns) + "|"
    lines = [header, rule]
    for row in rows:
        cells = []
        for key, _, fmt in columns:
            v = row.get(key)
            cells.append(format(v, fmt) if fmt and v is not None else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _csv_table(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key for key, _, _ in columns])
    for row in rows:
        w.writerow([row.get(key) for key, _, _ in columns])
    return buf.getvalue()


def _emit(envelope: dict, table_columns, table_rows, fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = canonical_json(envelope)
    elif fmt == "csv":
        text = _csv_table(table_columns, table_rows)
    else:
        text = _md_table(table_columns, table_rows)
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return harness.resolve_threads(args.threads)
    env = os.environ.get("RSQRT_FORGE_THREADS")
    if env is not None and env.strip():
        return harness.resolve_threads(int(env))
    return 1


def _hard_invariants_ok(hists) -> bool:
    return all(
        h.two_plus_ulp == 0 and h.unfaithful == 0
        for a, h in hists.items()
        if a in _WEAKLY_ROUNDED
    )


# ---------------------------------------------------------------- commands


def _cmd_eval(args) -> int:
    prec = _PRECISIONS[args.precision]
    x = parse_float_literal(args.x, prec)
    algo = AlgorithmId.parse(args.algo)
    y = algos.rsqrt_full_range(x, algo, prec)
    verdict = oracle.classify(y, x, prec)
    print(
        f"x={hexfmt(x)} algo={algo.value} output={hexfmt(y)} "
        f"oracle={hexfmt(verdict.correct)} verdict={verdict.kind.value} "
        f"ulp={verdict.ulp_distance}"
    )
    return 0


def _cmd_accuracy(args) -> int:
    prec = _PRECISIONS[args.precision]
    if args.plan_file:
        with open(args.plan_file) as f:
            saved = json.load(f)
        plan_src = saved.get("plan", saved)
        prec = _PRECISIONS["b32" if saved.get("precision") == "binary32" else "b64"] \
            if "precision" in saved else prec
        lo = float.fromhex(plan_src["interval"][0])
        hi = float.fromhex(plan_src["interval"][1])
        plan = SamplePlan(lo, hi, plan_src["count"], plan_src["seed"], prec,
                          tuple(AlgorithmId.parse(a) for a in plan_src["algorithms"]))
    else:
        lo, hi = _parse_interval(args.interval, prec)
        plan = SamplePlan(lo, hi, args.samples, args.seed, prec, _parse_algos(args.algos))
    t0 = time.perf_counter()
    hists = harness.run_sampled(plan, threads=_resolve_threads(args))
    wall_ms = int((time.perf_counter() - t0) * 1000)
    rows = [_hist_row(hists[a]) for a in plan.algorithms]
    env = _envelope("accuracy", prec, _plan_dict(plan), rows, wall_ms)
    _emit(env, _HIST_COLUMNS, rows, args.format, args.out)
    if not _hard_invariants_ok(hists):
        print("hard invariant violated: a weakly rounded kernel exceeded 1 ulp "
              "or returned an unfaithful value", file=sys.stderr)
        return 1
    return 0


def _cmd_exhaustive(args) -> int:
    prec = _PRECISIONS[args.precision]
    if prec is not BINARY32:
        raise DomainError("exhaustive sweeps are binary32 only; pass --precision b32")
    lo, hi = _parse_interval(args.interval, prec)
    algorithms = _parse_algos(args.algos)
    t0 = time.perf_counter()
    hists = harness.run_exhaustive_b32(lo, hi, algorithms, threads=_resolve_threads(args))
    wall_ms = int((time.perf_counter() - t0) * 1000)
    rows = [_hist_row(hists[a]) for a in algorithms]
    plan = {
        "interval": [hexfmt(lo), hexfmt(hi)],
        "count": hists[algorithms[0]].total,
        "seed": None,
        "prng": "exhaustive",
        "algorithms": [a.value for a in algorithms],
    }
    witnesses = {
        a.value: [{"x_hex": hexfmt(x), "ulp": d} for x, d in hists[a].witnesses]
        for a in algorithms
        if hists[a].keep_witnesses
    }
    env = _envelope("exhaustive", prec, plan, rows, wall_ms, witnesses=witnesses)
    _emit(env, _HIST_COLUMNS, rows, args.format, args.out)
    return 0 if _hard_invariants_ok(hists) else 1


_SCAN_COLUMNS = [
    ("k", "k", ""),
    ("x_hex", "x", ""),
    ("algo", "algo", ""),
    ("output_hex", "output", ""),
    ("verdict", "verdict", ""),
    ("ulp", "ulp", ""),
]


def _cmd_scan(args) -> int:
    prec = _PRECISIONS[args.precision]
    algorithms = _parse_algos(args.algos)
    t0 = time.perf_counter()
    scan = harness.scan_counterexample_family(args.kmin, args.kmax, algorithms, prec)
    wall_ms = int((time.perf_counter() - t0) * 1000)
    rows = [
        {
            "k": r.k,
            "x_hex": hexfmt(r.x),
            "algo": r.algorithm.value,
            "output_hex": hexfmt(r.output),
            "verdict": r.verdict.kind.value,
            "ulp": r.verdict.ulp_distance,
        }
        for r in scan
    ]
    plan = {
        "interval": None,
        "count": len(rows),
        "seed": None,
        "prng": f"family k={args.kmin}..{args.kmax}",
        "algorithms": [a.value for a in algorithms],
    }
    env = _envelope("scan", prec, plan, [], wall_ms, scan=rows)
    _emit(env, _SCAN_COLUMNS, rows, args.format, args.out)
    expected = {
        AlgorithmId.NEWTON: oracle.VerdictKind.FAITHFUL_LOW.value,
        AlgorithmId.HALLEY: oracle.VerdictKind.CORRECTLY_ROUNDED.value,
    }
    for r in rows:
        want = expected.get(AlgorithmId(r["algo"]))
        if want is not None and r["verdict"] != want:
            print(f"unexpected verdict at k={r['k']} for {r['algo']}: {r['verdict']}",
                  file=sys.stderr)
            return 1
    return 0


_INVARIANT_COLUMNS = [
    ("family", "family", ""),
    ("checked", "checked", ""),
    ("skipped", "skipped", ""),
    ("failed", "failed", ""),
]


def _cmd_invariants(args) -> int:
    prec = _PRECISIONS[args.precision]
    lo, hi = _parse_interval(args.interval, prec)
    plan = SamplePlan(lo, hi, args.samples, args.seed, prec,
                      (AlgorithmId.NAIVE, AlgorithmId.NEWTON))
    t0 = time.perf_counter()
    report = harness.run_invariant_suite(plan, threads=_resolve_threads(args))
    wall_ms = int((time.perf_counter() - t0) * 1000)
    rows = [
        {
            "family": f.name,
            "checked": f.checked,
            "skipped": f.skipped,
            "failed": f.failed,
            "witnesses": [{"x_hex": hexfmt(x), "detail": d} for x, d in f.witnesses],
        }
        for f in report.families.values()
    ]
    env = _envelope("invariants", prec, _plan_dict(plan), [], wall_ms, invariants=rows)
    _emit(env, _INVARIANT_COLUMNS, rows, args.format, args.out)
    return 0 if report.all_passed else 1


_BENCH_COLUMNS = [
    ("algo", "algo", ""),
    ("ns_per_op", "ns/op (median)", ".1f"),
    ("ns_min", "ns/op (min)", ".1f"),
    ("ns_max", "ns/op (max)", ".1f"),
    ("n", "n", ""),
    ("reps", "reps", ""),
]


def _cmd_bench(args) -> int:
    prec = _PRECISIONS[args.precision]
    algorithms = _parse_algos(args.algos)
    t0 = time.perf_counter()
    bench = harness.run_benchmark(algorithms, args.n, args.reps, args.seed, prec)
    wall_ms = int((time.perf_counter() - t0) * 1000)
    rows = [
        {
            "algo": b.algorithm.value,
            "ns_per_op": round(b.ns_per_op, 1),
            "ns_min": round(b.ns_spread[0], 1),
            "ns_max": round(b.ns_spread[1], 1),
            "n": b.n,
            "reps": b.reps,
        }
        for b in bench
    ]
    ratios = {}
    by_algo = {b.algorithm: b.ns_per_op for b in bench}
    if AlgorithmId.RCP_SQRT_331D in by_algo and AlgorithmId.RCP_SQRT_331D_HALLEY in by_algo:
        ratios["rcpsqrt331dhalley/rcpsqrt331d"] = round(
            by_algo[AlgorithmId.RCP_SQRT_331D_HALLEY] / by_algo[AlgorithmId.RCP_SQRT_331D], 4)
    plan = {
        "interval": [hexfmt(1.0), hexfmt(2.0)],
        "count": args.n,
        "seed": args.seed,
        "prng": PRNG_ID,
        "algorithms": [a.value for a in algorithms],
    }
    note = "informational: interpreted-Python timings, dominated by call overhead"
    env = _envelope("bench", prec, plan, [], wall_ms,
                    bench=rows, ratios=ratios, note=note)
    _emit(env, _BENCH_COLUMNS, rows, args.format, args.out)
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsqrt-forge",
        description="Reciprocal square root kernels vs. an exact correct-rounding oracle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--precision", choices=("b32", "b64"), default="b64",
                        help="floating-point format (default b64)")
    shared.add_argument("--format", choices=("md", "csv", "json"), default="md",
                        help="report format (default md)")
    shared.add_argument("--seed", type=int, default=42, help="PRNG seed (default 42)")
    shared.add_argument("--threads", type=int, default=None,
                        help="worker processes; 0 = auto; default from "
                             "RSQRT_FORGE_THREADS or 1. Results do not depend on this.")
    shared.add_argument("--out", metavar="FILE", default=None,
                        help="write the report to FILE instead of stdout")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[shared],
                       help="evaluate one input and classify it against the oracle")
    p.add_argument("--x", required=True,
                   help="input value, decimal or hex-float (hex is bit-exact)")
    p.add_argument("--algo", required=True, help="kernel name")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("accuracy", parents=[shared],
                       help="seeded random sampling run with ULP histograms")
    p.add_argument("--interval", default="1:2", help="sampling interval LO:HI (default 1:2)")
    p.add_argument("--samples", type=int, default=1_000_000,
                   help="sample count (default 1000000)")
    p.add_argument("--algos", default="naive,newton", help="comma-separated kernels")
    p.add_argument("--plan-file", default=None,
                   help="JSON report or plan to re-run; overrides the flags above")
    p.set_defaults(fn=_cmd_accuracy)

    p = sub.add_parser("exhaustive", parents=[shared],
                       help="test every binary32 value in an interval (max two binades)")
    p.add_argument("--interval", default="1:4", help="interval LO:HI (default 1:4)")
    p.add_argument("--algos", default="newton", help="comma-separated kernels")
    p.set_defaults(fn=_cmd_exhaustive)

    p = sub.add_parser("scan", parents=[shared],
                       help="scan the counterexample family x = (1-2u)*4^k")
    p.add_argument("--kmin", type=int, default=0)
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--algos", default="newton,halley", help="comma-separated kernels")
    p.set_defaults(fn=_cmd_scan)

    p = sub.add_parser("invariants", parents=[shared],
                       help="exact-arithmetic invariant suite over a sample stream")
    p.add_argument("--interval", default="1:2", help="sampling interval LO:HI")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(fn=_cmd_invariants)

    p = sub.add_parser("bench", parents=[shared],
                       help="informational per-call timing of the kernels")
    p.add_argument("--algos", default="rcpsqrt331d,rcpsqrt331dhalley")
    p.add_argument("--n", type=int, default=1_000_000, help="inputs per rep")
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
