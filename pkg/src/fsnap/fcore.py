"""The wait-free F-snapshot algorithm.

``update`` computes F on a fresh snapshot of the unbounded values and
publishes the answer in a bounded flag, together with enough ordering
information (view-sum classification, colors and bounded timestamps) for a
scanner to pick the most recent flag.  ``fscan`` reads only the flags.

Both operations are generators of :class:`~fsnap.shmem.Access` requests so
the same code runs under the deterministic scheduler and on real threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Generator, Sequence

from .functions import FFunction
from .shmem import Access, Memory
from .timestamp import INITIAL, INITIAL_PAIR, Timestamp, TimestampPair, dominates, newts, next_timestamp

Steps = Generator[Access, Any, Any]

# (object, access kind) for every shared access of one update, in order
UPDATE_SHAPE = (
    ("V", "update"),
    ("V", "scan"),
    ("VTS", "scan"),
    ("VTS", "update"),
    ("ViewSum", "update"),
    ("ViewSum", "scan"),
    ("Flags", "update"),
)
FSCAN_SHAPE = (("Flags", "scan"),)


class NoMaximal(RuntimeError):
    """No flag is maximal; reachable flag vectors never do this."""


class Mutation(str, enum.Enum):
    """Deliberately broken variants, used to check that the harness catches bugs."""

    NONE = "none"
    NO_NULL_CLEAR = "no-null-clear"
    CONSTANT_NEXT = "constant-next"


def _constant_next(v: Timestamp, u: Timestamp) -> Timestamp:
    return INITIAL


@dataclass(frozen=True)
class Flag:
    color: int
    vts: tuple[TimestampPair, ...]
    winners: frozenset[tuple[int, int]]
    losers: frozenset[tuple[int, int]]
    ans: Any


def initial_flag(i: int, n: int, initial_ans) -> Flag:
    return Flag(
        color=0,
        vts=(INITIAL_PAIR,) * n,
        winners=frozenset((j, 0) for j in range(i + 1, n)),
        losers=frozenset((j, 0) for j in range(i)),
        ans=initial_ans,
    )


def initial_memory(n: int, f: FFunction, x0) -> dict[str, list]:
    ans0 = f.eval((x0,) * n)
    return {
        "V": [(0, x0)] * n,
        "VTS": [(INITIAL_PAIR,) * n] * n,
        "ViewSum": [(0, None, None)] * n,
        "Flags": [initial_flag(i, n, ans0) for i in range(n)],
    }


@dataclass
class ProcessState:
    pid: int
    n: int
    f: FFunction
    x0: Any = 0
    mutation: Mutation = Mutation.NONE
    counter: int = 0
    color: int = 0
    viewsum: int = 0
    myview: list = field(default_factory=lambda: [0, None, None])
    vts: list = field(default_factory=list)
    winners: frozenset = frozenset()
    losers: frozenset = frozenset()
    ans: Any = None
    val: Any = None

    def __post_init__(self):
        self.mutation = Mutation(self.mutation)
        if not self.vts:
            self.vts = [INITIAL_PAIR] * self.n
        if self.ans is None:
            self.ans = self.f.eval((self.x0,) * self.n)
        if self.val is None:
            self.val = self.x0
        start = initial_flag(self.pid, self.n, self.ans)
        self.winners, self.losers = start.winners, start.losers

    @property
    def next_fn(self):
        return _constant_next if self.mutation is Mutation.CONSTANT_NEXT else next_timestamp


def classify(i: int, viewsum: int, views: Sequence[Sequence[int | None]]):
    """Sort every (pid, color) slot into winners (saw more) and losers (saw less).

    Equal sums are broken by pid.  Null slots land in neither set.
    """
    winners = set()
    losers = set()
    for j, view in enumerate(views):
        for c, s in enumerate(view):
            if s is None:
                continue
            if s > viewsum or (s == viewsum and i < j):
                winners.add((j, c))
            elif s < viewsum or (s == viewsum and i > j):
                losers.add((j, c))
    return frozenset(winners), frozenset(losers)


def newflag(state: ProcessState) -> Flag:
    return Flag(state.color, tuple(state.vts), state.winners, state.losers, state.ans)


def update_steps(state: ProcessState, v) -> Steps:
    i, n = state.pid, state.n
    state.counter += 1
    state.color = state.counter % 3
    state.val = v
    yield Access("V", "update", (state.counter, v))
    entries = yield Access("V", "scan")
    state.ans = state.f.eval([val for _, val in entries])
    rows = yield Access("VTS", "scan")
    next_fn = state.next_fn
    for j in range(n):
        state.vts[j] = newts(rows[j][i], state.vts[j], next_fn)
    yield Access("VTS", "update", tuple(state.vts))
    state.viewsum = sum(counter for counter, _ in entries)
    state.myview[state.color] = state.viewsum
    if state.mutation is not Mutation.NO_NULL_CLEAR:
        state.myview[(state.color + 1) % 3] = None
    yield Access("ViewSum", "update", tuple(state.myview))
    views = yield Access("ViewSum", "scan")
    state.winners, state.losers = classify(i, state.viewsum, views)
    yield Access("Flags", "update", newflag(state))


def fscan_steps(state: ProcessState) -> Steps:
    flags = yield Access("Flags", "scan")
    return flags[find_max(flags)].ans


def conflict(i: int, flag_i: Flag, j: int, flag_j: Flag) -> bool:
    mine, theirs = (j, flag_j.color), (i, flag_i.color)
    return (mine in flag_i.winners and theirs in flag_j.winners) or (
        mine in flag_i.losers and theirs in flag_j.losers
    )


def lt_s(i: int, flag_i: Flag, j: int, flag_j: Flag) -> bool:
    """Whether the scanner orders p_i before p_j, given their flags."""
    j_seen_by_i = (j, flag_j.color)
    i_seen_by_j = (i, flag_i.color)
    if not conflict(i, flag_i, j, flag_j):
        return i_seen_by_j in flag_j.losers or j_seen_by_i in flag_i.winners
    ts_i, ts_j = flag_i.vts[j].new, flag_j.vts[i].new
    if dominates(ts_j, ts_i) and i_seen_by_j in flag_j.losers:
        return True
    return dominates(ts_i, ts_j) and j_seen_by_i in flag_i.winners


def find_max(flags: Sequence[Flag]) -> int:
    n = len(flags)
    for i in range(n):
        if not any(lt_s(i, flags[i], j, flags[j]) for j in range(n) if j != i):
            return i
    raise NoMaximal(f"every one of {n} flags is dominated")


def drive(steps: Steps, memory: Memory, pid: int, tag=None):
    """Run an operation to completion against ``memory``; returns its result."""
    result = None
    while True:
        try:
            access = steps.send(result)
        except StopIteration as stop:
            return stop.value
        result = memory.perform(pid, access, tag)


def update(state: ProcessState, v, memory: Memory, tag=None) -> None:
    drive(update_steps(state, v), memory, state.pid, tag)


def fscan(state: ProcessState, memory: Memory, tag=None):
    return drive(fscan_steps(state), memory, state.pid, tag)


def encode_value(obj: str, kind: str, value):
    """JSON-ready form of a segment value, or of a scanned vector for scans."""
    if kind == "scan":
        return [_encode_segment(obj, v) for v in value]
    return _encode_segment(obj, value)


def _encode_segment(obj: str, value):
    if obj == "V":
        return [value[0], _encode_plain(value[1])]
    if obj == "VTS":
        return [pair.encode() for pair in value]
    if obj == "ViewSum":
        return list(value)
    return {
        "color": value.color,
        "vts": [pair.encode() for pair in value.vts],
        "winners": sorted([list(p) for p in value.winners]),
        "losers": sorted([list(p) for p in value.losers]),
        "ans": _encode_plain(value.ans),
    }


def _encode_plain(x):
    return list(x) if isinstance(x, tuple) else x


def decode_value(obj: str, kind: str, data, f: FFunction):
    if kind == "scan":
        return tuple(_decode_segment(obj, v, f) for v in data)
    return _decode_segment(obj, data, f)


def _decode_segment(obj: str, data, f: FFunction):
    if obj == "V":
        val = data[1]
        return (data[0], tuple(val) if isinstance(val, list) else val)
    if obj == "VTS":
        return tuple(TimestampPair.decode(p) for p in data)
    if obj == "ViewSum":
        return tuple(data)
    return Flag(
        color=data["color"],
        vts=tuple(TimestampPair.decode(p) for p in data["vts"]),
        winners=frozenset(tuple(p) for p in data["winners"]),
        losers=frozenset(tuple(p) for p in data["losers"]),
        ans=f.normalize(data["ans"]),
    )
