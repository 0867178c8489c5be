"""Minimal dense tensor type used as the numeric currency of the toolkit.

Values are immutable, row-major, 64-bit real arrays.  The two reductions that
are sensitive to floating-point association (matrix product and sum) are
computed with an explicit left-to-right fold over the contracted axis, so a
result is bit-for-bit reproducible across runs and machines and exactly equal
to what a naive loop would produce.  Elementwise arithmetic has no ordering
freedom and is delegated to numpy directly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError

__all__ = ["Tensor", "matmul", "map_elementwise", "reduce", "tensor", "zeros", "identity"]


class Tensor:
    """Immutable dense array of float64 with row-major storage.

    All entries are finite; constructing a tensor from data containing NaN or
    infinity raises :class:`NumericalError`.  The wrapped numpy array is
    C-contiguous and marked read-only, so it can be shared freely.
    """

    __slots__ = ("_a",)

    def __init__(self, values, *, _trusted: np.ndarray | None = None):
        if _trusted is not None:
            a = _trusted
        else:
            a = np.array(values, dtype=np.float64, order="C")
            if not np.all(np.isfinite(a)):
                raise NumericalError("tensor entries must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "_a", a)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def size(self) -> int:
        return self._a.size

    @property
    def ndim(self) -> int:
        return self._a.ndim

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the underlying storage."""
        return self._a

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the underlying storage."""
        return self._a.reshape(-1)

    def tolist(self):
        return self._a.tolist()

    def item(self) -> float:
        return float(self._a.reshape(-1)[0]) if self._a.size == 1 else self._raise_item()

    def _raise_item(self):
        raise DimensionError(f"item() requires a single-element tensor, got shape {self.shape}")

    def __len__(self) -> int:
        return self._a.shape[0] if self._a.ndim else 0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash((self.shape, self._a.tobytes()))


def tensor(values) -> Tensor:
    """Build a tensor from any array-like of reals."""
    return values if isinstance(values, Tensor) else Tensor(values)


def zeros(shape: int | Sequence[int]) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64), _trusted=np.zeros(shape, dtype=np.float64))


def identity(n: int) -> Tensor:
    return Tensor(np.eye(n, dtype=np.float64), _trusted=np.eye(n, dtype=np.float64))


def _wrap(a: np.ndarray) -> Tensor:
    """Wrap an array known to be finite float64 without re-validating."""
    return Tensor(None, _trusted=np.ascontiguousarray(a, dtype=np.float64))


def serial_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product accumulated strictly left-to-right over the inner axis.

    Each output entry is the fold ((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...), the
    exact float sequence a scalar triple loop produces.  Accumulation is done
    one inner-index slice at a time, so the result is independent of BLAS
    reassociation and of how many rows are batched together.
    """
    if a.ndim == 1:
        return serial_matmul(a[None, :], b)[0]
    if b.ndim == 1:
        return serial_matmul(a, b[:, None])[:, 0]
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise DimensionError(f"inner dimensions do not agree: {a.shape} x {b.shape}")
    out = np.zeros((m, n), dtype=np.float64)
    for j in range(k):
        out += a[:, j : j + 1] * b[j : j + 1, :]
    return out


def serial_sum(a: np.ndarray) -> float:
    """Left-to-right fold of all entries in row-major order.

    Uses the cumulative sum, whose final prefix is by definition the
    sequential fold, avoiding numpy's pairwise reassociation in ``sum``.
    """
    flat = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        return 0.0
    return float(np.cumsum(flat)[-1])


def serial_row_sums(a: np.ndarray) -> np.ndarray:
    """Per-row left-to-right fold for a 2-D array."""
    if a.shape[1] == 0:
        return np.zeros(a.shape[0], dtype=np.float64)
    return np.cumsum(a, axis=1)[:, -1]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard matrix product of two 2-D tensors.

    Summation order is deterministic (row-major, left-to-right), so results
    match a naive triple loop bit for bit.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    return _wrap(serial_matmul(a.array, b.array))


def map_elementwise(a: Tensor, f: Callable[[float], float]) -> Tensor:
    """Apply a scalar function to each entry, preserving shape."""
    flat = a.data
    out = np.fromiter((f(float(v)) for v in flat), dtype=np.float64, count=flat.size)
    return Tensor(out.reshape(a.shape))


def reduce(a: Tensor, kind: str) -> float:
    """Reduce all entries to a scalar; ``kind`` is ``sum``, ``max`` or ``mean``.

    The sum (and hence the mean) folds entries left to right in row-major
    order; ``max`` is order-insensitive.
    """
    if a.size == 0:
        raise ConfigError("cannot reduce an empty tensor")
    if kind == "sum":
        return serial_sum(a.array)
    if kind == "max":
        return float(np.max(a.array))
    if kind == "mean":
        return serial_sum(a.array) / a.size
    raise ConfigError(f"unknown reduction kind {kind!r}, expected sum|max|mean")
