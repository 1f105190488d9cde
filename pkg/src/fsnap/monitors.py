"""Invariant monitors evaluated over a recorded step trace.

Monitors only read the trace; they rebuild whatever they need (segment
contents, the view sum behind every flag) from the recorded events, so they
stay independent of the code that produced the run.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Sequence

from .fcore import FSCAN_SHAPE, UPDATE_SHAPE, NoMaximal, find_max, initial_memory, lt_s
from .functions import FFunction
from .shmem import OBJECTS, AccessStats, TraceEvent


@dataclass(frozen=True)
class Finding:
    monitor: str
    step: int | None
    detail: str

    def to_record(self) -> dict:
        return {"monitor": self.monitor, "step": self.step, "detail": self.detail}


@dataclass
class MonitorReport:
    findings: list[Finding] = field(default_factory=list)
    checks: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, monitor: str, step: int | None, detail: str) -> None:
        self.findings.append(Finding(monitor, step, detail))

    def merge(self, other: MonitorReport) -> None:
        self.findings.extend(other.findings)
        self.checks.update(other.checks)


def op_kinds_from_trace(trace: Sequence[TraceEvent]) -> dict[int, str]:
    """Infer each high-level op's kind from its first access."""
    kinds: dict[int, str] = {}
    for ev in trace:
        if ev.hl_op is not None and ev.hl_op not in kinds:
            kinds[ev.hl_op] = "fscan" if (ev.object, ev.kind) == ("Flags", "scan") else "update"
    return kinds


def check_shapes(trace: Sequence[TraceEvent], op_kinds: dict[int, str], report: MonitorReport,
                 stats: AccessStats | None = None) -> None:
    accesses: dict[int, list[TraceEvent]] = defaultdict(list)
    for ev in trace:
        if ev.hl_op is None:
            report.add("op-shape", ev.step, "access outside any high-level operation")
            continue
        accesses[ev.hl_op].append(ev)
    for hl_op, kind in op_kinds.items():
        events = accesses.get(hl_op, [])
        shape = tuple((e.object, e.kind) for e in events)
        step = events[0].step if events else None
        if kind == "fscan":
            report.checks["fscan-access"] += 1
            if shape != FSCAN_SHAPE:
                report.add("fscan-access", step, f"fscan {hl_op} accessed {shape}, expected one Flags scan")
        else:
            report.checks["update-shape"] += 1
            if shape != UPDATE_SHAPE:
                report.add("update-shape", step, f"update {hl_op} accessed {shape}")
        if len({e.pid for e in events}) > 1:
            report.add("op-shape", step, f"op {hl_op} has accesses from several processes")
        if stats is not None:
            report.checks["stats-soundness"] += 1
            if stats.per_op[hl_op] != len(events):
                report.add("stats-soundness", step,
                           f"op {hl_op}: {len(events)} trace events but {stats.per_op[hl_op]} counted")


def check_trace(trace: Sequence[TraceEvent], n: int, f: FFunction, x0: Any = 0,
                op_kinds: dict[int, str] | None = None, stats: AccessStats | None = None,
                crash: Any = None) -> MonitorReport:
    report = MonitorReport()
    if crash is not None:
        report.add("crash", getattr(crash, "step", None), str(crash))
    if op_kinds is None:
        op_kinds = op_kinds_from_trace(trace)
    check_shapes(trace, op_kinds, report, stats)

    segments = {name: list(values) for name, values in initial_memory(n, f, x0).items()}
    # view sum behind the flag currently in each Flags segment (initial flags: 0)
    flag_sum = [0] * n
    view_sum_of_op: dict[int, int] = {}

    for expected_step, ev in enumerate(trace):
        if ev.step != expected_step:
            report.add("trace-steps", ev.step, f"expected step {expected_step}")
        if ev.object not in OBJECTS or not 0 <= ev.pid < n:
            report.add("trace-steps", ev.step, f"bad event {ev.object}/{ev.pid}")
            continue
        if ev.kind == "update":
            segments[ev.object][ev.pid] = ev.value
            if ev.object == "Flags":
                report.checks["flag-disjoint"] += 1
                overlap = ev.value.winners & ev.value.losers
                if overlap:
                    report.add("flag-disjoint", ev.step, f"p{ev.pid} wrote winners∩losers={sorted(overlap)}")
                flag_sum[ev.pid] = view_sum_of_op.get(ev.hl_op, 0)
            continue

        report.checks["scan-consistency"] += 1
        if tuple(ev.value) != tuple(segments[ev.object]):
            report.add("scan-consistency", ev.step, f"{ev.object} scan differs from segment contents")
        if ev.object == "V":
            view_sum_of_op[ev.hl_op] = sum(counter for counter, _ in ev.value)
        elif ev.object == "Flags":
            _check_flag_scan(ev, n, list(flag_sum), report)
    return report


def _check_flag_scan(ev: TraceEvent, n: int, sums: list[int], report: MonitorReport) -> None:
    flags = ev.value
    report.checks["antisymmetry"] += 1
    order = [[i != j and lt_s(i, flags[i], j, flags[j]) for j in range(n)] for i in range(n)]
    report.checks["pairwise-order"] += 1
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if j > i and order[i][j] and order[j][i]:
                report.add("antisymmetry", ev.step, f"p{i} and p{j} each ordered before the other")
            if order[i][j] != ((sums[i], i) < (sums[j], j)):
                report.add("pairwise-order", ev.step,
                           f"p{i} before p{j} is {order[i][j]} but m={sums}")
    report.checks["no-maximal"] += 1
    try:
        winner = find_max(flags)
    except NoMaximal as exc:
        report.add("no-maximal", ev.step, str(exc))
        return
    report.checks["argmax"] += 1
    expected = max(range(n), key=lambda i: (sums[i], i))
    if winner != expected:
        report.add("argmax", ev.step,
                   f"find_max picked p{winner} but (m, pid) argmax is p{expected}; m={sums}")
