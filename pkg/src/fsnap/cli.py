"""``fsnap`` command line: explore, fuzz, replay, oracle-diff, bound-check, bench, check."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import random
import sys
import time
from pathlib import Path

from . import harness
from .checker import MalformedHistory, check, load_history, validate_witness
from .fcore import Mutation
from .functions import FunctionSpecError, parse_function

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser, *, n: int | None = 2, function: str = "sum-mod:5") -> None:
    if n is not None:
        p.add_argument("--n", type=int, default=n, help="number of processes")
    p.add_argument("--function", default=function, help="sum-mod:K, max-pid, all-equal or identity")
    p.add_argument("--x0", type=int, default=0, help="initial segment value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutation", choices=[m.value for m in Mutation], default="none",
                   help="run a deliberately broken variant of the algorithm")
    p.add_argument("--report", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsnap", description="Check the wait-free F-snapshot algorithm.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run every interleaving of small programs")
    _add_common(p)
    p.add_argument("--ops", type=int, default=2, help="ops per process (update, fscan, update, ...)")
    p.add_argument("--program", action="append", metavar="OPS",
                   help="explicit program for the next process, e.g. 'u:1,f'; repeat once per process")
    p.add_argument("--budget", type=int, default=harness.DEFAULT_STEP_BUDGET, help="max total atomic steps")
    p.add_argument("--max-schedules", type=int, default=harness.DEFAULT_SCHEDULE_BUDGET)

    p = sub.add_parser("fuzz", help="random programs under seeded random schedules")
    _add_common(p, n=4)
    p.add_argument("--ops", type=int, default=3, help="ops per process")
    p.add_argument("--schedules", type=int, default=1000)
    p.add_argument("--backend", choices=["simulated", "native"], default="simulated")
    p.add_argument("--trace-dir", help="write traces of failing runs here")
    p.add_argument("--keep-going", action="store_true", help="do not stop at the first failure")

    p = sub.add_parser("replay", help="check a recorded trace and re-execute its schedule")
    p.add_argument("trace")
    _add_common(p, n=None)

    p = sub.add_parser("oracle-diff", help="sequential runs compared with the atomic reference")
    _add_common(p, n=None)
    p.add_argument("--runs", type=int, default=1000)

    p = sub.add_parser("bound-check", help="long run counting distinct Flags and V values")
    _add_common(p, n=3, function="sum-mod:4")
    p.add_argument("--updates", type=int, default=100_000)
    p.add_argument("--fscan-prob", type=float, default=0.5, help="chance of an fscan after each update")
    p.add_argument("--csv", help="write the distinct-values curve here")

    p = sub.add_parser("bench", help="accesses per operation and wall time")
    _add_common(p, n=4)
    p.add_argument("--ops", type=int, default=3)
    p.add_argument("--runs", type=int, default=200)

    p = sub.add_parser("check", help="linearizability verdict for a JSON-lines history file")
    p.add_argument("history")
    _add_common(p)
    return parser


def parse_program(pid: int, text: str) -> harness.ProcessProgram:
    calls = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        name, _, arg = item.partition(":")
        if name in ("u", "update"):
            try:
                calls.append(harness.Call("update", int(arg)))
            except ValueError:
                raise UsageError(f"bad update value in {item!r}") from None
        elif name in ("f", "fscan") and not arg:
            calls.append(harness.Call("fscan"))
        else:
            raise UsageError(f"bad program item {item!r}")
    return harness.ProcessProgram(pid, calls)


def _emit(args, command: str, ok: bool, result: dict, started: float) -> int:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("report", "verbose", "command")}
    doc = {
        # the only wall-clock dependent key
        "header": {
            "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "elapsed_seconds": round(time.perf_counter() - started, 3),
        },
        "command": command,
        "config": config,
        "ok": ok,
        "result": result,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.report:
        harness.write_atomic(args.report, text)
    else:
        sys.stdout.write(text)
    if not ok:
        print(f"fsnap {command}: FAILED", file=sys.stderr)
        for finding in _first_findings(result):
            print(f"  {finding}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def _first_findings(result: dict, limit: int = 5) -> list[str]:
    out = []
    for key in ("failures",):
        for failure in result.get(key, [])[:limit]:
            findings = failure.get("findings")
            if isinstance(findings, list) and findings:
                fd = findings[0]
                out.append(f"{fd['monitor']} @ step {fd['step']}: {fd['detail']}")
    for key in ("recorded_findings", "rerun_findings"):
        for fd in result.get(key, [])[:limit]:
            out.append(f"{fd['monitor']} @ step {fd['step']}: {fd['detail']}")
    return out


def _cmd_explore(args, parser) -> int:
    f = parse_function(args.function, args.n)
    if args.program:
        if len(args.program) != args.n:
            parser.error(f"--program given {len(args.program)} times for --n {args.n}")
        programs = [parse_program(pid, text) for pid, text in enumerate(args.program)]
    else:
        programs = harness.alternating_programs(args.n, args.ops)
    started = time.perf_counter()
    try:
        report = harness.explore(programs, f, args.x0, args.budget, args.max_schedules, args.mutation)
    except harness.BudgetExceeded as exc:
        result = exc.report.to_dict()
        result["error"] = str(exc)
        return _emit(args, "explore", False, result, started)
    return _emit(args, "explore", report.ok, report.to_dict(), started)


def _cmd_fuzz(args, parser) -> int:
    f = parse_function(args.function, args.n)
    started = time.perf_counter()
    if args.backend == "native":
        return _fuzz_native(args, f, started)
    workers = int(os.environ.get("FSNAP_WORKERS", "1"))
    report = harness.fuzz(args.n, f, args.ops, args.schedules, args.seed, args.x0, args.mutation,
                          workers=workers, trace_dir=args.trace_dir, stop_on_failure=not args.keep_going)
    return _emit(args, "fuzz", report.ok, report.to_dict(), started)


def _fuzz_native(args, f, started) -> int:
    failures = []
    seeds = harness.run_seeds(args.seed, args.schedules)
    for run_seed in seeds:
        programs = harness.random_programs(random.Random(run_seed), args.n, args.ops)
        run = harness.run_native(programs, f, args.x0, args.mutation)
        report = harness.verify_native(run, programs, f, args.x0)
        if not report.ok:
            failures.append({"run_seed": run_seed, "findings": [x.to_record() for x in report.findings]})
            if not args.keep_going:
                break
    # native interleavings are not reproducible, so the result carries no per-run detail beyond failures
    return _emit(args, "fuzz", not failures, {"backend": "native", "schedules": len(seeds),
                                             "failures": failures}, started)


def _cmd_replay(args, parser) -> int:
    path = Path(args.trace)
    if not path.is_file():
        parser.error(f"no such trace file: {path}")
    started = time.perf_counter()
    try:
        report = harness.replay(path.read_text(encoding="utf-8"), lambda n: parse_function(args.function, n),
                                args.x0, args.mutation)
    except (ValueError, KeyError) as exc:
        return _emit(args, "replay", False, {"error": f"cannot replay trace: {exc}"}, started)
    return _emit(args, "replay", report.ok, report.to_dict(), started)


def _cmd_oracle_diff(args, parser) -> int:
    started = time.perf_counter()
    report = harness.sequential_diff(args.runs, args.seed, x0=args.x0)
    return _emit(args, "oracle-diff", report.ok, report.to_dict(), started)


def _cmd_bound_check(args, parser) -> int:
    f = parse_function(args.function, args.n)
    if not f.finite_range:
        parser.error(f"{f.spec} has an infinite range; bound-check needs a finite one")
    started = time.perf_counter()
    report = harness.bound_check(args.n, f, args.updates, args.seed, args.x0, args.fscan_prob,
                                 mutation=args.mutation)
    if args.csv:
        harness.write_atomic(args.csv, report.curve_csv())
    return _emit(args, "bound-check", report.ok, report.to_dict(), started)


def _cmd_bench(args, parser) -> int:
    f = parse_function(args.function, args.n)
    started = time.perf_counter()
    result = harness.bench(args.n, f, args.ops, args.runs, args.seed, args.x0)
    timings = {k: result.pop(k) for k in ("simulated_seconds_per_op", "native_seconds")}
    shapes_ok = all(sum(counts.values()) == harness.STEPS_PER_OP[op]
                    for op, counts in result["accesses_per_op"].items())
    code = _emit(args, "bench", shapes_ok, result, started)
    print(json.dumps({"timings": timings}), file=sys.stderr)
    return code


def _cmd_check(args, parser) -> int:
    path = Path(args.history)
    if not path.is_file():
        parser.error(f"no such history file: {path}")
    f = parse_function(args.function, args.n)
    started = time.perf_counter()
    try:
        history = load_history(path.read_text(encoding="utf-8"))
        verdict = check(history, f, args.n, args.x0)
    except MalformedHistory as exc:
        return _emit(args, "check", False, {"error": str(exc)}, started)
    result = {"linearizable": verdict.linearizable, "witness": verdict.witness}
    if verdict:
        result["witness_problems"] = validate_witness(history, verdict.witness, f, args.n, args.x0)
    return _emit(args, "check", verdict.linearizable and not result.get("witness_problems"), result, started)


COMMANDS = {
    "explore": _cmd_explore,
    "fuzz": _cmd_fuzz,
    "replay": _cmd_replay,
    "oracle-diff": _cmd_oracle_diff,
    "bound-check": _cmd_bound_check,
    "bench": _cmd_bench,
    "check": _cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        parser.print_usage(sys.stderr)
        print("fsnap: error: --n must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, parser)
    except (FunctionSpecError, UsageError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fsnap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
