"""Dense float64 tensors plus the exception types shared across the package."""

from __future__ import annotations

import math

import numpy as np


class XattribError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(XattribError):
    """Incompatible or malformed tensor/layer shapes."""


class ValidationError(XattribError):
    """Invalid values: non-finite data, bad parameters, malformed files."""


class UnsupportedError(XattribError):
    """A valid object was asked to do something outside its contract."""


class Tensor:
    """Dense n-dimensional array of finite 64-bit reals, row-major.

    The wrapped numpy array is made read-only so that tensors stay
    immutable after construction and can be shared across threads.
    """

    __slots__ = ("_array",)

    def __init__(self, values, dims=None):
        arr = np.array(values, dtype=np.float64, order="C")
        if dims is not None:
            dims = tuple(int(d) for d in dims)
            if any(d <= 0 for d in dims):
                raise ShapeError(f"tensor extents must be positive, got {dims}")
            expected = math.prod(dims)
            if arr.size != expected:
                raise ShapeError(
                    f"data length {arr.size} does not match dims {dims} "
                    f"(need {expected})"
                )
            arr = arr.reshape(dims)
        if arr.size == 0:
            raise ShapeError("tensor must have at least one element")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor data contains NaN or Inf")
        arr.setflags(write=False)
        self._array = arr

    @property
    def dims(self) -> tuple:
        return self._array.shape

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the data."""
        return self._array

    @property
    def data(self) -> list:
        """Flat row-major copy of the data as a Python list."""
        return self._array.ravel().tolist()

    @property
    def size(self) -> int:
        return self._array.size

    def reshape(self, dims) -> "Tensor":
        return Tensor(self._array, dims=dims)

    def item(self) -> float:
        if self._array.size != 1:
            raise ShapeError(f"item() on tensor with dims {self.dims}")
        return float(self._array.ravel()[0])

    def __array__(self, dtype=None):
        return self._array if dtype is None else self._array.astype(dtype)

    def __len__(self):
        return self._array.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(
            self._array, other._array
        )

    def __hash__(self):
        return hash((self.dims, self._array.tobytes()))

    def __repr__(self):
        return f"Tensor(dims={self.dims}, data={self._array.ravel().tolist()!r})"


def as_array(x, name="input") -> np.ndarray:
    """Coerce a Tensor / array-like into a finite float64 ndarray."""
    if isinstance(x, Tensor):
        return x.array
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
