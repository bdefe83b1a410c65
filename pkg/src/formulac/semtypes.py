"""Semantic types. Every dimension is a compile-time constant."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SemType:
    kind: str  # bool | int | real | vector | matrix | function
    shape: tuple[int, ...] = ()
    params: tuple[SemType, ...] = ()
    ret: SemType | None = None

    @property
    def is_scalar(self) -> bool:
        return self.kind in ("bool", "int", "real")

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("int", "real", "vector", "matrix")

    @property
    def is_array(self) -> bool:
        return self.kind in ("vector", "matrix")

    @property
    def is_function(self) -> bool:
        return self.kind == "function"

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def is_1x1(self) -> bool:
        return self.kind == "matrix" and self.shape == (1, 1)

    def __str__(self) -> str:
        if self.kind == "vector":
            return f"vector[{self.shape[0]}]"
        if self.kind == "matrix":
            return f"matrix[{self.shape[0]},{self.shape[1]}]"
        if self.kind == "function":
            return "(" + ", ".join(map(str, self.params)) + f") -> {self.ret}"
        return self.kind


BOOL = SemType("bool")
INT = SemType("int")
REAL = SemType("real")


def vector(n: int) -> SemType:
    if n < 1:
        raise ValueError("vector length must be positive")
    return SemType("vector", (n,))


def matrix(m: int, n: int) -> SemType:
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    return SemType("matrix", (m, n))


def function(params, ret) -> SemType:
    return SemType("function", (), tuple(params), ret)


def parse_type(text: str) -> SemType:
    """Parse the textual form produced by ``str(SemType)`` (value types only)."""
    text = text.replace(" ", "")
    if text in ("bool", "int", "real"):
        return SemType(text)
    if text.startswith("vector[") and text.endswith("]"):
        return vector(int(text[7:-1]))
    if text.startswith("matrix[") and text.endswith("]"):
        m, n = text[7:-1].split(",")
        return matrix(int(m), int(n))
    raise ValueError(f"not a value type: {text!r}")
