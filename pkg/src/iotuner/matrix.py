"""Dense 32-bit matrix storage and the math primitives the model code builds on.

Values are stored row-major as IEEE-754 single precision.  Multiplication
accumulates dot products in double precision and rounds the result back to
single, which keeps long chains numerically stable without changing the
storage contract.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

DTYPE = np.float32


class Matrix:
    """A rows x cols array of float32, C-contiguous.

    Matrices behave as plain values: no operation in this module mutates
    its inputs, so instances can be handed between threads freely.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray | Sequence[Sequence[float]]):
        arr = np.array(data, dtype=DTYPE, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"matrix must be 2-D and non-empty, got shape {arr.shape}")
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(np.zeros((rows, cols), dtype=DTYPE))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls(np.eye(n, dtype=DTYPE))

    @classmethod
    def column(cls, values: Iterable[float]) -> "Matrix":
        """Build an n x 1 column vector."""
        col = np.asarray(list(values), dtype=DTYPE).reshape(-1, 1)
        return cls(col)

    def copy(self) -> "Matrix":
        return Matrix(self.data)

    def tolist(self) -> list[list[float]]:
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # mutable payload; not hashable

    def allclose(self, other: "Matrix", atol: float = 1e-6, rtol: float = 1e-5) -> bool:
        return self.shape == other.shape and bool(
            np.allclose(self.data, other.data, atol=atol, rtol=rtol)
        )


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product; entry (i,j) = sum_k a(i,k) * b(k,j)."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.rows}x{a.cols} vs {b.rows}x{b.cols}"
        )
    prod = np.matmul(a.data.astype(np.float64), b.data.astype(np.float64))
    return Matrix(prod.astype(DTYPE))


def elementwise(op: str, a: Matrix, b: Matrix) -> Matrix:
    """Entrywise add / sub / mul of two same-shape matrices."""
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shapes differ, {a.shape} vs {b.shape}")
    if op == "add":
        out = a.data + b.data
    elif op == "sub":
        out = a.data - b.data
    elif op == "mul":
        out = a.data * b.data
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    return Matrix(out)


def add(a: Matrix, b: Matrix) -> Matrix:
    return elementwise("add", a, b)


def sub(a: Matrix, b: Matrix) -> Matrix:
    return elementwise("sub", a, b)


def mul(a: Matrix, b: Matrix) -> Matrix:
    return elementwise("mul", a, b)


def transpose(a: Matrix) -> Matrix:
    return Matrix(np.ascontiguousarray(a.data.T))


def softmax(v: Matrix) -> Matrix:
    """Softmax over a vector (1 x n or n x 1), returned in the same shape.

    The maximum entry is subtracted before exponentiation, so the result is
    shift-invariant and never overflows for finite input.
    """
    if v.rows != 1 and v.cols != 1:
        raise ShapeError(f"softmax expects a vector, got {v.rows}x{v.cols}")
    x = v.data.astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax: input contains NaN or Inf")
    shifted = x - x.max()
    e = np.exp(shifted)
    out = e / e.sum()
    return Matrix(out.astype(DTYPE))
