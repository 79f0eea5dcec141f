"""Minimal dense linear algebra shared by the networks.

Matrices support both row-major and column-major storage; storage order
never affects results because every operation computes on a canonical
(row-major, contiguous) view of the same logical matrix. All arithmetic is
32-bit floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

Layout = Literal["row-major", "column-major"]

_ACTIVATIONS = ("sigmoid", "tanh", "relu")


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


@dataclass
class OpCounters:
    """Per-run-context operation counters.

    Counters are owned by whoever runs the network (a session, a test),
    never shared globally, so concurrent sessions do not contend.
    """

    matvec_count: int = 0
    matvec_macs: int = 0
    head_evals: int = 0

    def count_matvec(self, rows: int, cols: int, n: int = 1) -> None:
        self.matvec_count += n
        self.matvec_macs += n * rows * cols

    def count_head(self, n: int = 1) -> None:
        self.head_evals += n

    def reset(self) -> None:
        self.matvec_count = 0
        self.matvec_macs = 0
        self.head_evals = 0


@dataclass
class Vector:
    """Dense float32 vector."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32).reshape(-1)

    @property
    def len(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "Vector":
        return cls(np.zeros(n, dtype=np.float32))

    @classmethod
    def of(cls, values: Iterable[float]) -> "Vector":
        return cls(np.asarray(list(values), dtype=np.float32))


@dataclass
class Matrix:
    """Dense float32 matrix with explicit storage layout.

    ``data`` is the flat storage in the declared layout order. The layout
    is a storage property only: `as_array` always returns the same logical
    row-major array regardless of layout, which is what every kernel
    consumes.
    """

    rows: int
    cols: int
    layout: Layout = "row-major"
    data: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.data is None:
            self.data = np.zeros(self.rows * self.cols, dtype=np.float32)
        self.data = np.asarray(self.data, dtype=np.float32).reshape(-1)
        if self.data.shape[0] != self.rows * self.cols:
            raise DimensionError(
                f"matrix data has {self.data.shape[0]} values, "
                f"expected {self.rows}x{self.cols}"
            )
        if self.layout not in ("row-major", "column-major"):
            raise ValueError(f"unknown layout {self.layout!r}")

    @classmethod
    def from_array(cls, arr: np.ndarray, layout: Layout = "row-major") -> "Matrix":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 2:
            raise DimensionError("from_array expects a 2-D array")
        rows, cols = arr.shape
        flat = arr.reshape(-1) if layout == "row-major" else arr.T.reshape(-1)
        return cls(rows, cols, layout, np.ascontiguousarray(flat))

    @classmethod
    def identity(cls, n: int, layout: Layout = "row-major") -> "Matrix":
        return cls.from_array(np.eye(n, dtype=np.float32), layout)

    def as_array(self) -> np.ndarray:
        """Logical (rows, cols) array, contiguous row-major."""
        if self.layout == "row-major":
            return self.data.reshape(self.rows, self.cols)
        return np.ascontiguousarray(self.data.reshape(self.cols, self.rows).T)

    def with_layout(self, layout: Layout) -> "Matrix":
        return Matrix.from_array(self.as_array(), layout)


def matvec(m: Matrix, v: Vector, counters: OpCounters | None = None) -> Vector:
    """Matrix-vector product m @ v.

    Both storage layouts produce bitwise-identical results: the product is
    always computed on the canonical row-major array.
    """
    if m.cols != v.len:
        raise DimensionError(f"matvec: {m.rows}x{m.cols} @ vector[{v.len}]")
    if counters is not None:
        counters.count_matvec(m.rows, m.cols)
    return Vector(np.dot(m.as_array(), v.data))


def affine(w: Matrix, x: Vector, b: Vector, counters: OpCounters | None = None) -> Vector:
    """w @ x + b."""
    if w.rows != b.len:
        raise DimensionError(f"affine: output dim {w.rows} != bias dim {b.len}")
    y = matvec(w, x, counters)
    return Vector(y.data + b.data)


def activate(v: Vector, kind: str) -> Vector:
    """Elementwise nonlinearity: sigmoid, tanh, or relu."""
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}")
    x = v.data
    if kind == "sigmoid":
        out = np.float32(1.0) / (np.float32(1.0) + np.exp(-x))
    elif kind == "tanh":
        out = np.tanh(x)
    else:
        out = np.maximum(x, np.float32(0.0))
    return Vector(out)


def softmax(logits: Vector) -> Vector:
    """Numerically stabilized softmax (max subtraction before exp)."""
    if logits.len == 0:
        raise DimensionError("softmax of empty vector")
    x = logits.data
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax requires finite logits")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return Vector(e / np.sum(e))


def argmax(v: Vector) -> int:
    """Index of the maximum entry; ties break to the lowest index."""
    if v.len == 0:
        raise DimensionError("argmax of empty vector")
    return int(np.argmax(v.data))
