"""Single-writer snapshot objects and the backends that execute processes on them.

Processes are written as generators that yield :class:`Access` requests and
receive each request's result.  The simulated backend executes exactly one
request per scheduling decision, so a snapshot update or scan is one atomic
step and all local computation up to the next request runs with it.  The
native backend runs every process on its own thread against lock-protected
objects.
"""

from __future__ import annotations

import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, NamedTuple, Protocol

OBJECTS = ("V", "VTS", "ViewSum", "Flags")

DEFAULT_DISTINCT_CAP = 1 << 20


class MisuseError(RuntimeError):
    """A process touched a segment or object it has no business touching."""


class DistinctValueOverflow(RuntimeError):
    pass


class Access(NamedTuple):
    obj: str
    kind: str  # "update" | "scan"
    value: Any = None


class Begin(NamedTuple):
    """Marker: a high-level operation starts with the process's next access."""

    hl_op: int
    op: str
    arg: Any = None


class End(NamedTuple):
    """Marker: the high-level operation finished with its last access."""

    hl_op: int
    op: str
    result: Any = None


@dataclass(frozen=True)
class TraceEvent:
    step: int
    pid: int
    object: str
    kind: str
    value: Any
    hl_op: int | None

    def to_record(self, encode: Callable[[str, str, Any], Any]) -> dict:
        return {
            "step": self.step,
            "pid": self.pid,
            "object": self.object,
            "kind": self.kind,
            "value": encode(self.object, self.kind, self.value),
            "hl_op": self.hl_op,
        }


class SnapshotObject:
    """An n-segment single-writer snapshot object.

    Segment values must be immutable; a scan hands out a tuple of them.
    """

    def __init__(self, name: str, initial):
        self.name = name
        self._segments = list(initial)
        self.n = len(self._segments)

    def _check_pid(self, pid: int) -> None:
        if not 0 <= pid < self.n:
            raise MisuseError(f"{self.name}: pid {pid} out of range for {self.n} segments")

    def update(self, pid: int, value) -> None:
        self._check_pid(pid)
        self._segments[pid] = value

    def scan(self, pid: int) -> tuple:
        self._check_pid(pid)
        return tuple(self._segments)


class LockedSnapshotObject(SnapshotObject):
    """Coarse linearizable snapshot: every operation is a short critical section."""

    def __init__(self, name: str, initial):
        super().__init__(name, initial)
        self._lock = threading.Lock()

    def update(self, pid: int, value) -> None:
        self._check_pid(pid)
        with self._lock:
            self._segments[pid] = value

    def scan(self, pid: int) -> tuple:
        self._check_pid(pid)
        with self._lock:
            return tuple(self._segments)


class AccessStats:
    """Per-operation access counts and distinct written values per object."""

    def __init__(self, n: int, distinct_cap: int = DEFAULT_DISTINCT_CAP, track_distinct: bool = True):
        self.n = n
        self.distinct_cap = distinct_cap
        self.track_distinct = track_distinct
        # (pid, op kind) -> Counter[(object, access kind)]
        self.by_op_kind: dict[tuple[int, str], Counter] = defaultdict(Counter)
        self.per_op: Counter = Counter()
        self.writes: Counter = Counter()
        self.distinct: dict[str, list[set]] = {name: [set() for _ in range(n)] for name in OBJECTS}
        self.distinct_total: Counter = Counter()
        # write ordinals (per object) at which a never-seen value was written
        self.new_value_at: dict[str, list[int]] = {name: [] for name in OBJECTS}

    def record(self, pid: int, tag: tuple[int, str] | None, obj: str, kind: str, value) -> None:
        if tag is not None:
            hl_op, op = tag
            self.by_op_kind[pid, op][obj, kind] += 1
            self.per_op[hl_op] += 1
        if kind != "update":
            return
        self.writes[obj] += 1
        if not self.track_distinct:
            return
        seen = self.distinct[obj][pid]
        if value not in seen:
            if self.distinct_total[obj] >= self.distinct_cap:
                raise DistinctValueOverflow(
                    f"more than {self.distinct_cap} distinct values written to {obj}; raise the cap"
                )
            seen.add(value)
            self.distinct_total[obj] += 1
            self.new_value_at[obj].append(self.writes[obj])

    def distinct_counts(self, obj: str) -> list[int]:
        return [len(s) for s in self.distinct[obj]]

    def new_values_after(self, obj: str, ordinal: int) -> int:
        """How many distinct values first appeared after the given write ordinal."""
        return sum(1 for w in self.new_value_at[obj] if w > ordinal)


class Memory:
    """The four snapshot objects of one run, with instrumentation."""

    def __init__(self, initial: dict[str, list], *, native: bool = False, record_trace: bool = True,
                 stats: AccessStats | None = None):
        cls = LockedSnapshotObject if native else SnapshotObject
        self.objects = {name: cls(name, initial[name]) for name in OBJECTS}
        self.n = self.objects["V"].n
        self.stats = stats if stats is not None else AccessStats(self.n)
        self.trace: list[TraceEvent] | None = [] if record_trace else None
        self.steps = 0
        self._stats_lock = threading.Lock() if native else None

    def perform(self, pid: int, access: Access, tag: tuple[int, str] | None = None):
        try:
            target = self.objects[access.obj]
        except KeyError:
            raise MisuseError(f"no shared object named {access.obj!r}") from None
        if access.kind == "update":
            target.update(pid, access.value)
            result = None
            payload = access.value
        elif access.kind == "scan":
            result = payload = target.scan(pid)
        else:
            raise MisuseError(f"unknown access kind {access.kind!r}")
        if self._stats_lock is not None:
            with self._stats_lock:
                self.steps += 1
                self.stats.record(pid, tag, access.obj, access.kind, payload)
        else:
            self.steps += 1
            if self.trace is not None:
                self.trace.append(TraceEvent(self.steps - 1, pid, access.obj, access.kind, payload,
                                             None if tag is None else tag[0]))
            self.stats.record(pid, tag, access.obj, access.kind, payload)
        return result


class ScheduleSource(Protocol):
    def choose(self, runnable: list[int]) -> int: ...


class OpListener(Protocol):
    def begin(self, pid: int, marker: Begin) -> None: ...

    def end(self, pid: int, marker: End) -> None: ...


class ProcessCrashed(RuntimeError):
    def __init__(self, pid: int, step: int, error: BaseException):
        super().__init__(f"process {pid} raised {error!r} at step {step}")
        self.pid = pid
        self.step = step
        self.error = error


@dataclass
class _SimProcess:
    pid: int
    body: Iterator
    pending: Access | None = None
    begin: Begin | None = None
    current: tuple[int, str] | None = None


class _NullListener:
    def begin(self, pid, marker):
        pass

    def end(self, pid, marker):
        pass


@dataclass
class SimulatedBackend:
    """Runs process bodies in one context; ``schedule`` picks every step."""

    memory: Memory
    schedule: ScheduleSource
    listener: OpListener = field(default_factory=_NullListener)

    def _advance(self, proc: _SimProcess, result) -> None:
        send = result
        while True:
            try:
                item = proc.body.send(send)
            except StopIteration:
                proc.pending = None
                return
            except Exception as exc:
                raise ProcessCrashed(proc.pid, self.memory.steps - 1, exc) from exc
            send = None
            if isinstance(item, Access):
                proc.pending = item
                return
            if isinstance(item, Begin):
                proc.begin = item
            elif isinstance(item, End):
                if proc.begin is not None and proc.begin.hl_op == item.hl_op:
                    self._emit_begin(proc)
                self.listener.end(proc.pid, item)
                proc.current = None
            else:
                raise MisuseError(f"process {proc.pid} yielded {item!r}")

    def _emit_begin(self, proc: _SimProcess) -> None:
        self.listener.begin(proc.pid, proc.begin)
        proc.current = (proc.begin.hl_op, proc.begin.op)
        proc.begin = None

    def run(self, bodies: list[Iterator]) -> None:
        procs = [_SimProcess(pid, body) for pid, body in enumerate(bodies)]
        for proc in procs:
            self._advance(proc, None)
        while True:
            runnable = [p.pid for p in procs if p.pending is not None]
            if not runnable:
                return
            proc = procs[self.schedule.choose(runnable)]
            if proc.pending is None:
                raise MisuseError(f"schedule picked non-runnable process {proc.pid}")
            if proc.begin is not None:
                self._emit_begin(proc)
            result = self.memory.perform(proc.pid, proc.pending, proc.current)
            self._advance(proc, result)


@dataclass
class NativeBackend:
    """One thread per process; memory objects are lock-protected."""

    memory: Memory

    def run(self, workers: list[Callable[[Memory], None]], timeout: float | None = 60.0) -> None:
        barrier = threading.Barrier(len(workers))
        errors: list[BaseException] = []

        def target(work):
            barrier.wait()
            try:
                work(self.memory)
            except BaseException as exc:  # surfaced to the caller below
                errors.append(exc)

        threads = [threading.Thread(target=target, args=(w,), daemon=True) for w in workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout)
            if t.is_alive():
                raise TimeoutError("native run did not complete in time")
        if errors:
            raise errors[0]


def reset_backend(mode: str, n: int, initial: dict[str, list], schedule: ScheduleSource | None = None, *,
                  listener: OpListener | None = None, record_trace: bool = True,
                  stats: AccessStats | None = None):
    """Fresh objects with the given initial segment values, bound to a backend."""
    if n < 1:
        raise ValueError("need at least one process")
    if any(len(initial[name]) != n for name in OBJECTS):
        raise ValueError("initial values must have one entry per process")
    if mode == "simulated":
        if schedule is None:
            raise ValueError("simulated mode needs a schedule source")
        memory = Memory(initial, record_trace=record_trace, stats=stats)
        return SimulatedBackend(memory, schedule, listener or _NullListener())
    if mode == "native":
        return NativeBackend(Memory(initial, native=True, record_trace=False, stats=stats))
    raise ValueError(f"unknown backend mode {mode!r}")
