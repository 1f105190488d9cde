"""Bounded timestamps on a 9-vertex dominance graph.

The graph has three 3-cycles.  Inside a cycle each vertex dominates its
predecessor, and every vertex of cycle ``c + 1 (mod 3)`` dominates every
vertex of cycle ``c``.  Any two vertices have a common dominator, which is
all the pairwise timestamp exchange of the F-snapshot algorithm needs.
"""

from __future__ import annotations

from typing import NamedTuple


class Timestamp(NamedTuple):
    cycle: int
    index: int

    def encode(self) -> int:
        return 3 * self.cycle + self.index

    @classmethod
    def decode(cls, code: int) -> Timestamp:
        if not 0 <= code < 9:
            raise ValueError(f"timestamp code out of range: {code}")
        return VERTICES[code]


class TimestampPair(NamedTuple):
    old: Timestamp
    new: Timestamp

    def encode(self) -> list[int]:
        return [self.old.encode(), self.new.encode()]

    @classmethod
    def decode(cls, data) -> TimestampPair:
        old, new = data
        return cls(Timestamp.decode(old), Timestamp.decode(new))


# cycle major, index minor; next() scans in this order
VERTICES: tuple[Timestamp, ...] = tuple(Timestamp(c, i) for c in range(3) for i in range(3))

INITIAL = Timestamp(0, 0)
INITIAL_PAIR = TimestampPair(INITIAL, INITIAL)


def dominates(v: Timestamp, u: Timestamp) -> bool:
    """True iff ``v`` dominates ``u``, i.e. ``u <_ts v``."""
    if v.cycle == u.cycle:
        return v.index == (u.index + 1) % 3
    return v.cycle == (u.cycle + 1) % 3


def _first_common_dominator(v: Timestamp, u: Timestamp) -> Timestamp:
    for w in VERTICES:
        if dominates(w, v) and dominates(w, u):
            return w
    raise AssertionError(f"no common dominator for {v} and {u}")


_NEXT: dict[tuple[Timestamp, Timestamp], Timestamp] = {
    (v, u): _first_common_dominator(v, u) for v in VERTICES for u in VERTICES
}
assert all(dominates(w, v) and dominates(w, u) for (v, u), w in _NEXT.items())


def next_timestamp(v: Timestamp, u: Timestamp) -> Timestamp:
    """The first vertex (in lexicographic order) dominating both arguments."""
    return _NEXT[v, u]


def newts(read: TimestampPair, mine: TimestampPair, next_fn=next_timestamp) -> TimestampPair:
    """Advance the caller's pair against the pair it read from a peer.

    The result's ``new`` dominates both timestamps of ``read``; its ``old``
    is the caller's previous ``new``.
    """
    return TimestampPair(mine.new, next_fn(read.old, read.new))
