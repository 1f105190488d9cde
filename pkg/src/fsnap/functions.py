"""The n-ary functions an F-snapshot object can be instantiated with.

Functions are selected by a textual spec such as ``sum-mod:5`` so that run
configurations stay copy-pasteable and picklable across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

BUILTINS = ("sum-mod", "max-pid", "all-equal", "identity")


class FunctionSpecError(ValueError):
    pass


@dataclass(frozen=True)
class FFunction:
    """A total function ``Vals^n -> D`` over natural-number values."""

    name: str
    arity: int
    modulus: int | None = None

    def __post_init__(self):
        if self.name not in BUILTINS:
            raise FunctionSpecError(f"unknown function {self.name!r}; choose from {', '.join(BUILTINS)}")
        if self.arity < 1:
            raise FunctionSpecError("arity must be at least 1")
        if self.name == "sum-mod":
            if self.modulus is None or self.modulus < 1:
                raise FunctionSpecError("sum-mod needs a positive modulus, e.g. sum-mod:5")
        elif self.modulus is not None:
            raise FunctionSpecError(f"{self.name} takes no parameter")

    @property
    def spec(self) -> str:
        return f"{self.name}:{self.modulus}" if self.modulus is not None else self.name

    @property
    def finite_range(self) -> bool:
        return self.name != "identity"

    @property
    def range_size(self) -> int | None:
        if self.name == "sum-mod":
            return self.modulus
        if self.name == "max-pid":
            return self.arity
        if self.name == "all-equal":
            return 2
        return None

    def eval(self, vals: Sequence[Any]) -> Any:
        if len(vals) != self.arity:
            raise ValueError(f"{self.spec} expects {self.arity} values, got {len(vals)}")
        if self.name == "sum-mod":
            return sum(vals) % self.modulus
        if self.name == "max-pid":
            # pid of the lexicographically largest (value, pid)
            return max(range(self.arity), key=lambda i: (vals[i], i))
        if self.name == "all-equal":
            return all(v == vals[0] for v in vals)
        return tuple(vals)

    __call__ = eval

    def normalize(self, result: Any) -> Any:
        """Map a JSON-decoded result back onto this function's range type."""
        if self.name == "identity":
            return tuple(result)
        return result


def parse_function(text: str, n: int) -> FFunction:
    name, sep, param = text.partition(":")
    modulus = None
    if sep:
        try:
            modulus = int(param)
        except ValueError:
            raise FunctionSpecError(f"bad parameter in {text!r}") from None
    return FFunction(name, n, modulus)
