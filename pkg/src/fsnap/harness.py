"""Drivers: run programs under a scheduler, explore schedules, fuzz, and check runs."""

from __future__ import annotations

import bisect
import json
import logging
import math
import os
import random
import threading
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Sequence

from . import fcore
from .checker import HistoryEvent, PendingOperations, check, dump_history, validate_witness
from .fcore import Mutation, ProcessState, encode_value, decode_value, initial_memory
from .functions import FFunction
from .monitors import Finding, MonitorReport, check_trace
from .oracle import OracleState
from .shmem import AccessStats, Begin, End, ProcessCrashed, TraceEvent, reset_backend

log = logging.getLogger(__name__)

STEPS_PER_OP = {"update": len(fcore.UPDATE_SHAPE), "fscan": len(fcore.FSCAN_SHAPE)}
DEFAULT_STEP_BUDGET = 18
DEFAULT_SCHEDULE_BUDGET = 1_000_000


class Call(NamedTuple):
    op: str  # "update" | "fscan"
    arg: Any = None


@dataclass
class ProcessProgram:
    pid: int
    ops: list[Call]

    @property
    def steps(self) -> int:
        return sum(STEPS_PER_OP[c.op] for c in self.ops)


def fresh_value(pid: int, k: int, n: int) -> int:
    """Value of process ``pid``'s k-th update (k >= 1); globally distinct and never 0."""
    return pid + n * k


def alternating_programs(n: int, ops: int) -> list[ProcessProgram]:
    """update, fscan, update, ... per process, with fresh values."""
    programs = []
    for pid in range(n):
        calls = []
        for k in range(ops):
            if k % 2 == 0:
                calls.append(Call("update", fresh_value(pid, k // 2 + 1, n)))
            else:
                calls.append(Call("fscan"))
        programs.append(ProcessProgram(pid, calls))
    return programs


def random_programs(rng: random.Random, n: int, ops: int, p_update: float = 0.5) -> list[ProcessProgram]:
    programs = []
    for pid in range(n):
        calls, k = [], 0
        for _ in range(ops):
            if rng.random() < p_update:
                k += 1
                calls.append(Call("update", fresh_value(pid, k, n)))
            else:
                calls.append(Call("fscan"))
        programs.append(ProcessProgram(pid, calls))
    return programs


def count_interleavings(programs: Sequence[ProcessProgram]) -> int:
    steps = [p.steps for p in programs]
    total = math.factorial(sum(steps))
    for s in steps:
        total //= math.factorial(s)
    return total


# --------------------------------------------------------------------------
# schedule sources


class RandomSchedule:
    def __init__(self, seed):
        self.rng = random.Random(seed)

    def choose(self, runnable: list[int]) -> int:
        return runnable[self.rng.randrange(len(runnable))] if len(runnable) > 1 else runnable[0]


class ReplaySchedule:
    def __init__(self, pids: Sequence[int]):
        self.pids = list(pids)
        self.pos = 0

    def choose(self, runnable: list[int]) -> int:
        if self.pos >= len(self.pids):
            raise ValueError(f"replay schedule exhausted after {self.pos} steps")
        pid = self.pids[self.pos]
        if pid not in runnable:
            raise ValueError(f"replay step {self.pos}: p{pid} is not runnable (runnable: {runnable})")
        self.pos += 1
        return pid


class ExhaustiveCursor:
    """Depth-first enumeration of scheduler choices, one complete run at a time.

    Call :meth:`start` before each run and :meth:`advance` after it; the
    latter returns False once every schedule has been produced.
    """

    def __init__(self):
        self.stack: list[tuple[list[int], int]] = []
        self.pos = 0

    def start(self) -> None:
        self.pos = 0

    def choose(self, runnable: list[int]) -> int:
        if self.pos < len(self.stack):
            options, idx = self.stack[self.pos]
            if options != runnable:
                raise RuntimeError("nondeterministic run: runnable set changed under replay")
        else:
            self.stack.append((list(runnable), 0))
            idx = 0
            options = runnable
        self.pos += 1
        return options[idx]

    def schedule_id(self) -> tuple[int, ...]:
        return tuple(options[idx] for options, idx in self.stack)

    def advance(self) -> bool:
        while self.stack:
            options, idx = self.stack.pop()
            if idx + 1 < len(options):
                self.stack.append((options, idx + 1))
                return True
        return False


# --------------------------------------------------------------------------
# simulated runs


class _HistoryRecorder:
    def __init__(self):
        self.events: list[HistoryEvent] = []
        self.results: dict[int, Any] = {}

    def begin(self, pid: int, marker: Begin) -> None:
        self.events.append(HistoryEvent("invoke", pid, marker.op, marker.hl_op, arg=marker.arg))

    def end(self, pid: int, marker: End) -> None:
        self.events.append(HistoryEvent("respond", pid, marker.op, marker.hl_op, ret=marker.result))
        if marker.op == "fscan":
            self.results[marker.hl_op] = marker.result


def op_ids(programs: Sequence[ProcessProgram]) -> list[list[int]]:
    """Schedule-independent ids: ops numbered process by process, in program order."""
    ids, k = [], 0
    for prog in programs:
        ids.append(list(range(k, k + len(prog.ops))))
        k += len(prog.ops)
    return ids


def _body(state: ProcessState, calls: Sequence[Call], ids: Sequence[int]):
    for hl_op, call in zip(ids, calls):
        yield Begin(hl_op, call.op, call.arg)
        if call.op == "update":
            yield from fcore.update_steps(state, call.arg)
            yield End(hl_op, "update")
        elif call.op == "fscan":
            result = yield from fcore.fscan_steps(state)
            yield End(hl_op, "fscan", result)
        else:
            raise ValueError(f"unknown call {call.op!r}")


@dataclass
class Run:
    n: int
    f: FFunction
    x0: Any
    mutation: Mutation
    programs: list[ProcessProgram]
    schedule: list[int]
    trace: list[TraceEvent] | None
    history: list[HistoryEvent]
    results: dict[int, Any]
    stats: AccessStats
    crash: ProcessCrashed | None = None

    def op_kinds(self) -> dict[int, str]:
        return {ev.hl_op: ev.op for ev in self.history if ev.kind == "invoke"}

    def trace_lines(self) -> str:
        return "".join(json.dumps(ev.to_record(encode_value)) + "\n" for ev in self.trace or ())


def simulate(programs: Sequence[ProcessProgram], f: FFunction, x0: Any = 0, schedule=None,
             mutation: Mutation | str = Mutation.NONE, record_trace: bool = True,
             track_distinct: bool = True) -> Run:
    n = len(programs)
    if f.arity != n:
        raise ValueError(f"{f.spec} has arity {f.arity} but there are {n} programs")
    mutation = Mutation(mutation)
    recorder = _HistoryRecorder()
    chosen: list[int] = []

    class _Recording:
        def choose(self, runnable):
            pid = schedule.choose(runnable)
            chosen.append(pid)
            return pid

    stats = AccessStats(n, track_distinct=track_distinct)
    backend = reset_backend("simulated", n, initial_memory(n, f, x0), _Recording(), listener=recorder,
                            record_trace=record_trace, stats=stats)
    ids = op_ids(programs)
    bodies = [_body(ProcessState(p.pid, n, f, x0, mutation), p.ops, ids[p.pid]) for p in programs]
    crash = None
    try:
        backend.run(bodies)
    except ProcessCrashed as exc:
        crash = exc
    return Run(n, f, x0, mutation, list(programs), chosen, backend.memory.trace, recorder.events,
               recorder.results, stats, crash)


def verify_run(run: Run) -> tuple[MonitorReport, Any]:
    """All monitors plus the linearizability check; returns (report, verdict)."""
    report = check_trace(run.trace or [], run.n, run.f, run.x0, run.op_kinds(), run.stats, run.crash)
    verdict = None
    if run.crash is None:
        verdict = _check_history(run.history, run.f, run.n, run.x0, report)
    return report, verdict


def _check_history(history, f, n, x0, report: MonitorReport):
    report.checks["linearizability"] += 1
    try:
        verdict = check(history, f, n, x0)
    except PendingOperations as exc:
        report.add("linearizability", None, str(exc))
        return None
    if not verdict:
        report.add("linearizability", None, "no linearization matches the fscan results")
    else:
        for problem in validate_witness(history, verdict.witness, f, n, x0):
            report.add("witness", None, problem)
    return verdict


# --------------------------------------------------------------------------
# exhaustive exploration


class BudgetExceeded(RuntimeError):
    def __init__(self, message: str, report: ExplorationReport):
        super().__init__(message)
        self.report = report


@dataclass
class ExplorationReport:
    schedules: int = 0
    expected_schedules: int = 0
    failures: list[dict] = field(default_factory=list)
    monitor_checks: Counter = field(default_factory=Counter)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures and self.schedules == self.expected_schedules

    def to_dict(self) -> dict:
        return {
            "schedules": self.schedules,
            "expected_schedules": self.expected_schedules,
            "failures": self.failures,
            "monitor_checks": dict(sorted(self.monitor_checks.items())),
        }


def _failure_record(run: Run, report: MonitorReport, **extra) -> dict:
    rec = {"schedule": run.schedule, "findings": [f.to_record() for f in report.findings]}
    rec.update(extra)
    return rec


def explore(programs: Sequence[ProcessProgram], f: FFunction, x0: Any = 0,
            max_steps: int = DEFAULT_STEP_BUDGET, max_schedules: int = DEFAULT_SCHEDULE_BUDGET,
            mutation: Mutation | str = Mutation.NONE, max_failures: int = 10) -> ExplorationReport:
    """Run every interleaving of the programs' atomic steps and check each run."""
    report = ExplorationReport(expected_schedules=count_interleavings(programs))
    total = sum(p.steps for p in programs)
    if total > max_steps:
        raise BudgetExceeded(f"programs need {total} atomic steps, budget is {max_steps}", report)
    started = time.perf_counter()
    cursor = ExhaustiveCursor()
    seen: set[tuple[int, ...]] = set()
    while True:
        if report.schedules >= max_schedules:
            report.elapsed = time.perf_counter() - started
            raise BudgetExceeded(f"stopped after {max_schedules} schedules", report)
        cursor.start()
        run = simulate(programs, f, x0, cursor, mutation, track_distinct=False)
        sid = cursor.schedule_id()
        if sid in seen:
            raise RuntimeError(f"schedule {sid} explored twice")
        seen.add(sid)
        report.schedules += 1
        monitor_report, _ = verify_run(run)
        report.monitor_checks.update(monitor_report.checks)
        if not monitor_report.ok and len(report.failures) < max_failures:
            report.failures.append(_failure_record(run, monitor_report))
        elif not monitor_report.ok:
            report.failures.append({"schedule": run.schedule, "findings": "truncated"})
        if not cursor.advance():
            break
    report.elapsed = time.perf_counter() - started
    return report


# --------------------------------------------------------------------------
# seeded fuzzing


def run_seeds(seed: int, count: int) -> list[int]:
    rng = random.Random(seed)
    return [rng.getrandbits(48) for _ in range(count)]


def fuzz_one(n: int, f: FFunction, ops: int, run_seed: int, x0: Any = 0,
             mutation: Mutation | str = Mutation.NONE) -> tuple[Run, MonitorReport]:
    """One fuzz run: programs and schedule both derive from ``run_seed``."""
    rng = random.Random(run_seed)
    programs = random_programs(rng, n, ops)
    run = simulate(programs, f, x0, RandomSchedule(rng.getrandbits(64)), mutation, track_distinct=False)
    report, _ = verify_run(run)
    return run, report


def _fuzz_worker(args):
    n, f, ops, run_seed, x0, mutation = args
    run, report = fuzz_one(n, f, ops, run_seed, x0, mutation)
    if report.ok:
        return report, None
    return report, (run.trace_lines(), dump_history(run.history))


@dataclass
class FuzzReport:
    schedules: int = 0
    requested: int = 0
    failures: list[dict] = field(default_factory=list)
    monitor_checks: Counter = field(default_factory=Counter)
    run_seeds: list[int] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "schedules": self.schedules,
            "requested": self.requested,
            "failures": self.failures,
            "monitor_checks": dict(sorted(self.monitor_checks.items())),
            "run_seeds": self.run_seeds,
        }


def fuzz(n: int, f: FFunction, ops_per_proc: int, schedules: int, seed: int, x0: Any = 0,
         mutation: Mutation | str = Mutation.NONE, workers: int = 1, trace_dir: str | Path | None = None,
         stop_on_failure: bool = True) -> FuzzReport:
    mutation = Mutation(mutation)
    seeds = run_seeds(seed, schedules)
    report = FuzzReport(requested=schedules, run_seeds=seeds)
    started = time.perf_counter()
    jobs = ((n, f, ops_per_proc, s, x0, mutation) for s in seeds)
    if workers > 1:
        pool = ProcessPoolExecutor(workers)
        results = pool.map(_fuzz_worker, jobs, chunksize=64)
    else:
        pool = None
        results = map(_fuzz_worker, jobs)
    try:
        for run_seed, (monitor_report, files) in zip(seeds, results):
            report.schedules += 1
            report.monitor_checks.update(monitor_report.checks)
            if monitor_report.ok:
                continue
            failure = {"run_seed": run_seed, "findings": [x.to_record() for x in monitor_report.findings]}
            if trace_dir is not None:
                base = Path(trace_dir) / f"fuzz-{run_seed}"
                write_atomic(base.with_suffix(".trace"), files[0])
                write_atomic(base.with_suffix(".history"), files[1])
                failure["trace"] = str(base.with_suffix(".trace"))
            report.failures.append(failure)
            log.warning("fuzz failure with run seed %d: %s", run_seed, monitor_report.findings[0].detail)
            if stop_on_failure:
                break
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    report.elapsed = time.perf_counter() - started
    return report


# --------------------------------------------------------------------------
# sequential differential test against the atomic reference


def sequential_order(programs: Sequence[ProcessProgram], pattern: str, rng: random.Random) -> list[tuple[int, int]]:
    """(pid, op index) in the order ops run one at a time."""
    queues = [list(range(len(p.ops))) for p in programs]
    order = []
    if pattern == "round-robin":
        while any(queues):
            for pid, q in enumerate(queues):
                if q:
                    order.append((pid, q.pop(0)))
    elif pattern == "random":
        while any(queues):
            pid = rng.choice([p for p, q in enumerate(queues) if q])
            order.append((pid, queues[pid].pop(0)))
    elif pattern == "solo":
        for pid, q in enumerate(queues):
            order.extend((pid, k) for k in q)
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return order


@dataclass
class DiffReport:
    runs: int = 0
    fscans: int = 0
    mismatches: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"runs": self.runs, "fscans": self.fscans, "mismatches": self.mismatches}


def _random_function(rng: random.Random, n: int) -> FFunction:
    name = rng.choice(["sum-mod", "max-pid", "all-equal", "identity"])
    return FFunction(name, n, rng.randint(2, 7) if name == "sum-mod" else None)


def sequential_diff(runs: int, seed: int, max_n: int = 4, max_ops: int = 6, x0: Any = 0) -> DiffReport:
    """Run ops one at a time and compare every fscan with the atomic reference."""
    report = DiffReport()
    master = random.Random(seed)
    patterns = ("solo", "round-robin", "random")
    for k in range(runs):
        rng = random.Random(master.getrandbits(48))
        pattern = patterns[k % len(patterns)]
        n = rng.randint(1, max_n)
        f = _random_function(rng, n)
        programs = random_programs(rng, n, rng.randint(1, max_ops))
        if pattern == "solo":
            # one active process, the others stay idle
            active = rng.randrange(n)
            programs = [p if p.pid == active else ProcessProgram(p.pid, []) for p in programs]
        order = sequential_order(programs, pattern, rng)
        pids = [pid for pid, idx in order for _ in range(STEPS_PER_OP[programs[pid].ops[idx].op])]
        run = simulate(programs, f, x0, ReplaySchedule(pids), track_distinct=False)
        ids = op_ids(programs)
        oracle = OracleState(f, x0)
        report.runs += 1
        for pid, idx in order:
            call = programs[pid].ops[idx]
            if call.op == "update":
                oracle.update(pid, call.arg)
                continue
            report.fscans += 1
            expected = oracle.fscan()
            got = run.results.get(ids[pid][idx])
            if got != expected:
                report.mismatches.append({"run": k, "pattern": pattern, "n": n, "function": f.spec,
                                          "hl_op": ids[pid][idx], "expected": _jsonable(expected),
                                          "got": _jsonable(got)})
    return report


def _jsonable(x):
    return list(x) if isinstance(x, tuple) else x


# --------------------------------------------------------------------------
# boundedness


@dataclass
class BoundReport:
    n: int
    function: str
    updates: int
    fscans: int
    bound_per_segment: int
    flags_distinct_per_segment: list[int]
    flags_new_in_second_half: int
    v_distinct_per_segment: list[int]
    v_new_in_second_half: int
    curve: list[tuple[int, int, int]]
    # per segment: distinct values of each Flag field taken on its own
    flags_components: list[dict[str, int]] = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return max(self.flags_distinct_per_segment) <= self.bound_per_segment

    @property
    def flags_plateau(self) -> bool:
        return self.flags_new_in_second_half == 0

    @property
    def v_unbounded(self) -> bool:
        return self.v_new_in_second_half > 0

    @property
    def ok(self) -> bool:
        return self.within_bound and self.flags_plateau and self.v_unbounded

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "function": self.function,
            "updates": self.updates,
            "fscans": self.fscans,
            "bound_per_segment": self.bound_per_segment,
            "flags_distinct_per_segment": self.flags_distinct_per_segment,
            "flags_new_in_second_half": self.flags_new_in_second_half,
            "v_distinct_per_segment": self.v_distinct_per_segment,
            "v_new_in_second_half": self.v_new_in_second_half,
            "within_bound": self.within_bound,
            "flags_plateau": self.flags_plateau,
            "v_unbounded": self.v_unbounded,
            "flags_components_per_segment": self.flags_components,
        }

    def curve_csv(self) -> str:
        lines = ["updates,flags_distinct,v_distinct"]
        lines += [f"{u},{fl},{v}" for u, fl, v in self.curve]
        return "\n".join(lines) + "\n"


def flags_bound(n: int, range_size: int) -> int:
    """Per-segment count of Flag values: color x vts rows x slot classes x ans."""
    return 3 * 81 ** n * 4 ** (3 * n) * range_size


def bound_check(n: int, f: FFunction, updates: int, seed: int, x0: Any = 0, fscan_prob: float = 0.5,
                samples: int = 100, mutation: Mutation | str = Mutation.NONE) -> BoundReport:
    """Long random run; counts distinct values written to Flags and to V."""
    if not f.finite_range:
        raise ValueError(f"{f.spec} has an infinite range; boundedness does not apply")
    rng = random.Random(seed)
    calls: list[list[Call]] = [[] for _ in range(n)]
    counts = [0] * n
    for k in range(updates):
        pid = k % n
        counts[pid] += 1
        calls[pid].append(Call("update", fresh_value(pid, counts[pid], n)))
        if rng.random() < fscan_prob:
            calls[pid].append(Call("fscan"))
    programs = [ProcessProgram(pid, c) for pid, c in enumerate(calls)]
    run = simulate(programs, f, x0, RandomSchedule(rng.getrandbits(64)), mutation, record_trace=False)
    if run.crash is not None:
        raise run.crash
    stats = run.stats
    half = stats.writes["Flags"] // 2
    curve = []
    flags_new, v_new = stats.new_value_at["Flags"], stats.new_value_at["V"]
    step = max(1, updates // samples)
    for u in list(range(step, updates, step)) + [updates]:
        curve.append((u, bisect.bisect_right(flags_new, u), bisect.bisect_right(v_new, u)))
    return BoundReport(
        n=n,
        function=f.spec,
        updates=stats.writes["Flags"],
        fscans=sum(1 for c in calls for x in c if x.op == "fscan"),
        bound_per_segment=flags_bound(n, f.range_size),
        flags_distinct_per_segment=stats.distinct_counts("Flags"),
        flags_new_in_second_half=stats.new_values_after("Flags", half),
        v_distinct_per_segment=stats.distinct_counts("V"),
        v_new_in_second_half=stats.new_values_after("V", stats.writes["V"] // 2),
        curve=curve,
        flags_components=[_flag_components(seg) for seg in stats.distinct["Flags"]],
    )


def _flag_components(values) -> dict[str, int]:
    return {
        "color": len({fl.color for fl in values}),
        "vts": len({fl.vts for fl in values}),
        "winners": len({fl.winners for fl in values}),
        "losers": len({fl.losers for fl in values}),
        "ans": len({fl.ans for fl in values}),
    }


# --------------------------------------------------------------------------
# native threads


@dataclass
class NativeRun:
    history: list[HistoryEvent]
    stats: AccessStats
    elapsed: float


def run_native(programs: Sequence[ProcessProgram], f: FFunction, x0: Any = 0,
               mutation: Mutation | str = Mutation.NONE, timeout: float = 60.0) -> NativeRun:
    n = len(programs)
    mutation = Mutation(mutation)
    stats = AccessStats(n, track_distinct=False)
    backend = reset_backend("native", n, initial_memory(n, f, x0), stats=stats)
    history: list[HistoryEvent] = []
    lock = threading.Lock()
    ids = op_ids(programs)

    def worker(prog: ProcessProgram):
        state = ProcessState(prog.pid, n, f, x0, mutation)

        def work(memory):
            for hl_op, call in zip(ids[prog.pid], prog.ops):
                tag = (hl_op, call.op)
                with lock:
                    history.append(HistoryEvent("invoke", prog.pid, call.op, hl_op, arg=call.arg))
                if call.op == "update":
                    fcore.update(state, call.arg, memory, tag)
                    result = None
                else:
                    result = fcore.fscan(state, memory, tag)
                with lock:
                    history.append(HistoryEvent("respond", prog.pid, call.op, hl_op, ret=result))
        return work

    started = time.perf_counter()
    backend.run([worker(p) for p in programs], timeout)
    return NativeRun(history, stats, time.perf_counter() - started)


def verify_native(run: NativeRun, programs: Sequence[ProcessProgram], f: FFunction, x0: Any = 0) -> MonitorReport:
    """Op-count instrumentation plus linearizability; native runs have no step trace."""
    report = MonitorReport()
    n = len(programs)
    for prog in programs:
        per_kind = Counter(c.op for c in prog.ops)
        for op, shape in (("update", fcore.UPDATE_SHAPE), ("fscan", fcore.FSCAN_SHAPE)):
            expected = Counter()
            for access in shape:
                expected[access] += per_kind[op]
            got = +run.stats.by_op_kind.get((prog.pid, op), Counter())
            report.checks[f"{op}-counts"] += 1
            if got != +expected:
                report.add(f"{op}-counts", None, f"p{prog.pid} {op}: {dict(got)} != {dict(expected)}")
    _check_history(run.history, f, n, x0, report)
    return report


# --------------------------------------------------------------------------
# traces and replay


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_trace(text: str, f_for_n) -> tuple[int, list[TraceEvent], list[dict]]:
    """Parse trace JSON lines.  ``f_for_n(n)`` supplies the function used to decode answers."""
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    n = None
    for rec in records:
        if rec["kind"] == "scan":
            n = len(rec["value"])
            break
    if n is None:
        n = max((rec["pid"] for rec in records), default=0) + 1
    f = f_for_n(n)
    events = [TraceEvent(rec["step"], rec["pid"], rec["object"], rec["kind"],
                         decode_value(rec["object"], rec["kind"], rec["value"], f), rec["hl_op"])
              for rec in records]
    return n, events, records


def programs_from_trace(n: int, events: Sequence[TraceEvent]) -> list[ProcessProgram]:
    first: dict[int, TraceEvent] = {}
    for ev in events:
        first.setdefault(ev.hl_op, ev)
    programs = [ProcessProgram(pid, []) for pid in range(n)]
    for hl_op in sorted(first):
        ev = first[hl_op]
        if (ev.object, ev.kind) == ("V", "update"):
            programs[ev.pid].ops.append(Call("update", ev.value[1]))
        else:
            programs[ev.pid].ops.append(Call("fscan"))
    return programs


@dataclass
class ReplayReport:
    recorded: MonitorReport
    rerun: MonitorReport
    identical: bool
    run: Run

    @property
    def ok(self) -> bool:
        return self.recorded.ok and self.rerun.ok and self.identical

    def to_dict(self) -> dict:
        return {
            "recorded_findings": [x.to_record() for x in self.recorded.findings],
            "rerun_findings": [x.to_record() for x in self.rerun.findings],
            "identical": self.identical,
            "steps": len(self.run.schedule),
        }


def replay(text: str, f_for_n, x0: Any = 0, mutation: Mutation | str = Mutation.NONE) -> ReplayReport:
    """Check a recorded trace, then re-execute its schedule and compare."""
    n, events, _ = load_trace(text, f_for_n)
    f = f_for_n(n)
    recorded = check_trace(events, n, f, x0)
    programs = programs_from_trace(n, events)
    run = simulate(programs, f, x0, ReplaySchedule([ev.pid for ev in events]), mutation)
    rerun, _ = verify_run(run)
    identical = run.trace_lines() == "".join(line + "\n" for line in text.splitlines() if line.strip())
    if not identical:
        recorded.add("replay-divergence", None, "re-execution does not reproduce the recorded trace")
    return ReplayReport(recorded, rerun, identical, run)


# --------------------------------------------------------------------------
# bench


def bench(n: int, f: FFunction, ops_per_proc: int, runs: int, seed: int, x0: Any = 0) -> dict:
    """Accesses per operation and wall time, simulated and native."""
    per_op: dict[str, Counter] = {"update": Counter(), "fscan": Counter()}
    op_count = Counter()
    started = time.perf_counter()
    for run_seed in run_seeds(seed, runs):
        rng = random.Random(run_seed)
        run = simulate(random_programs(rng, n, ops_per_proc), f, x0, RandomSchedule(rng.getrandbits(64)),
                       record_trace=False, track_distinct=False)
        for (pid, op), counter in run.stats.by_op_kind.items():
            per_op[op].update(counter)
        op_count.update(run.op_kinds().values())
    simulated = time.perf_counter() - started
    rng = random.Random(seed)
    programs = random_programs(rng, n, ops_per_proc)
    native = run_native(programs, f, x0)
    return {
        "accesses_per_op": {
            op: {f"{obj}.{kind}": c / op_count[op] for (obj, kind), c in sorted(per_op[op].items())}
            for op in per_op if op_count[op]
        },
        "ops": dict(sorted(op_count.items())),
        "simulated_seconds_per_op": simulated / max(1, sum(op_count.values())),
        "native_seconds": native.elapsed,
    }
