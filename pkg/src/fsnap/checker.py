"""Linearizability checking of F-snapshot histories.

The search is Wing & Gong style: repeatedly pick an operation that no other
pending operation precedes, apply it to the atomic reference object, and
backtrack on a wrong ``fscan`` answer.  Visited (linearized-set, state) pairs
are memoized, which keeps the search small because the abstract state is
just the n-slot vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .functions import FFunction
from .oracle import OracleState


class MalformedHistory(ValueError):
    pass


class PendingOperations(MalformedHistory):
    pass


@dataclass(frozen=True)
class HistoryEvent:
    kind: str  # "invoke" | "respond"
    pid: int
    op: str  # "update" | "fscan"
    hl_op: int
    arg: Any = None
    ret: Any = None

    def to_record(self) -> dict:
        rec = {"kind": self.kind, "pid": self.pid, "op": self.op, "hl_op": self.hl_op}
        if self.kind == "invoke" and self.op == "update":
            rec["arg"] = self.arg
        if self.kind == "respond" and self.op == "fscan":
            rec["ret"] = list(self.ret) if isinstance(self.ret, tuple) else self.ret
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> HistoryEvent:
        try:
            return cls(rec["kind"], rec["pid"], rec["op"], rec["hl_op"], rec.get("arg"), rec.get("ret"))
        except KeyError as exc:
            raise MalformedHistory(f"history record missing {exc}") from None


History = list  # list[HistoryEvent]


@dataclass(frozen=True)
class Operation:
    hl_op: int
    pid: int
    op: str
    arg: Any
    ret: Any
    invoked: int
    responded: int | None


@dataclass
class Verdict:
    linearizable: bool
    witness: list[int] | None = None
    explored: int = 0

    def __bool__(self):
        return self.linearizable


def operations(history: Sequence[HistoryEvent]) -> list[Operation]:
    """Pair invocations with responses, validating well-formedness."""
    open_by_pid: dict[int, HistoryEvent] = {}
    invoked_at: dict[int, int] = {}
    seen: set[int] = set()
    ops: dict[int, Operation] = {}
    for pos, ev in enumerate(history):
        if ev.op not in ("update", "fscan"):
            raise MalformedHistory(f"unknown operation {ev.op!r} at event {pos}")
        if ev.kind == "invoke":
            if ev.pid in open_by_pid:
                raise MalformedHistory(f"pid {ev.pid} invokes while op {open_by_pid[ev.pid].hl_op} is open")
            if ev.hl_op in seen:
                raise MalformedHistory(f"hl_op {ev.hl_op} invoked twice")
            seen.add(ev.hl_op)
            open_by_pid[ev.pid] = ev
            invoked_at[ev.hl_op] = pos
        elif ev.kind == "respond":
            inv = open_by_pid.pop(ev.pid, None)
            if inv is None or inv.hl_op != ev.hl_op or inv.op != ev.op:
                raise MalformedHistory(f"response at event {pos} matches no open invocation of pid {ev.pid}")
            ops[ev.hl_op] = Operation(ev.hl_op, ev.pid, ev.op, inv.arg, ev.ret, invoked_at[ev.hl_op], pos)
        else:
            raise MalformedHistory(f"unknown event kind {ev.kind!r} at event {pos}")
    for inv in open_by_pid.values():
        ops[inv.hl_op] = Operation(inv.hl_op, inv.pid, inv.op, inv.arg, None, invoked_at[inv.hl_op], None)
    return sorted(ops.values(), key=lambda o: o.invoked)


def complete_pending(history: Sequence[HistoryEvent]) -> list[HistoryEvent]:
    """Return the history unchanged if every invocation has a response.

    Dropping an open update would be unsound (it may already have taken
    effect), so open operations are an error: the run must be driven to
    completion before checking.
    """
    pending = [o for o in operations(history) if o.responded is None]
    if pending:
        ids = ", ".join(str(o.hl_op) for o in pending)
        raise PendingOperations(f"{len(pending)} operation(s) never responded: {ids}")
    return list(history)


def check(history: Sequence[HistoryEvent], f: FFunction, n: int, x0: Any = 0) -> Verdict:
    ops = operations(complete_pending(history))
    if any(not 0 <= o.pid < n for o in ops):
        raise MalformedHistory(f"pid out of range for n={n}")
    count = len(ops)
    full = (1 << count) - 1
    rets = [f.normalize(o.ret) if o.op == "fscan" else None for o in ops]
    failed: set[tuple[int, tuple]] = set()
    answers: dict[tuple, Any] = {}
    explored = 0

    def answer(slots: tuple):
        try:
            return answers[slots]
        except KeyError:
            result = answers[slots] = f.eval(slots)
            return result

    def search(done: int, slots: tuple) -> list[int] | None:
        nonlocal explored
        if done == full:
            return []
        key = (done, slots)
        if key in failed:
            return None
        explored += 1
        # an op may go next only if it was invoked before every open op responded
        horizon = min(ops[k].responded for k in range(count) if not done >> k & 1)
        for k in range(count):
            if done >> k & 1:
                continue
            o = ops[k]
            if o.invoked > horizon:
                break
            if o.op == "update":
                nxt = slots[: o.pid] + (o.arg,) + slots[o.pid + 1:]
            else:
                if answer(slots) != rets[k]:
                    continue
                nxt = slots
            rest = search(done | 1 << k, nxt)
            if rest is not None:
                return [o.hl_op] + rest
        failed.add(key)
        return None

    order = search(0, (x0,) * n)
    if order is None:
        return Verdict(False, None, explored)
    return Verdict(True, order, explored)


def validate_witness(history: Sequence[HistoryEvent], witness: Sequence[int], f: FFunction, n: int,
                     x0: Any = 0) -> list[str]:
    """Independently re-verify a witness; returns a list of problems (empty if valid)."""
    ops = {o.hl_op: o for o in operations(history)}
    problems = []
    if sorted(witness) != sorted(ops):
        return ["witness is not a permutation of the history's operations"]
    position = {h: k for k, h in enumerate(witness)}
    for a in ops.values():
        for b in ops.values():
            if a.responded is not None and a.responded < b.invoked and position[a.hl_op] > position[b.hl_op]:
                problems.append(f"op {a.hl_op} responds before {b.hl_op} is invoked but is ordered after it")
    state = OracleState(f, x0)
    for h in witness:
        o = ops[h]
        if o.op == "update":
            state.update(o.pid, o.arg)
        elif state.fscan() != f.normalize(o.ret):
            problems.append(f"fscan {h} returned {o.ret!r}, replay gives {state.fscan()!r}")
    return problems


def dump_history(history: Iterable[HistoryEvent]) -> str:
    return "".join(json.dumps(ev.to_record()) + "\n" for ev in history)


def load_history(text: str) -> list[HistoryEvent]:
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            events.append(HistoryEvent.from_record(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise MalformedHistory(f"line {lineno}: {exc}") from None
    return events
