"""Atomic reference F-snapshot: one array, ``update`` writes a slot, ``fscan`` applies F."""

from __future__ import annotations

from typing import Any

from .functions import FFunction


class OracleState:
    __slots__ = ("f", "slots")

    def __init__(self, f: FFunction, x0: Any = 0, slots: tuple | None = None):
        self.f = f
        self.slots = tuple(slots) if slots is not None else (x0,) * f.arity

    def copy(self) -> OracleState:
        return OracleState(self.f, slots=self.slots)

    def update(self, i: int, v) -> None:
        if not 0 <= i < self.f.arity:
            raise IndexError(f"pid {i} out of range")
        slots = list(self.slots)
        slots[i] = v
        self.slots = tuple(slots)

    def fscan(self):
        return self.f.eval(self.slots)

    def __eq__(self, other):
        return isinstance(other, OracleState) and (self.f, self.slots) == (other.f, other.slots)

    def __hash__(self):
        return hash((self.f, self.slots))

    def __repr__(self):
        return f"OracleState({self.f.spec}, {self.slots})"


def oracle_update(st: OracleState, i: int, v) -> None:
    st.update(i, v)


def oracle_fscan(st: OracleState):
    return st.fscan()
