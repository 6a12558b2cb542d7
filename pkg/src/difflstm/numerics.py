"""Small dense linear algebra helpers and a portable seeded generator.

Matrices and vectors are plain ``float64`` numpy arrays; this module only adds
the shape checking the rest of the package relies on, plus :class:`Rng`, whose
output is defined bit-for-bit by its algorithm rather than by numpy's version.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ParameterError, ShapeError

Matrix = np.ndarray
Vector = np.ndarray

_MASK64 = (1 << 64) - 1


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Coerce ``data`` to a 2-D float64 array, optionally checking its shape.

    A flat sequence is accepted when both ``rows`` and ``cols`` are given and is
    read in row-major order.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1 and rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise ShapeError(f"need {rows * cols} values for a {rows}x{cols} matrix, got {arr.size}")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
        raise ShapeError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    return arr


def as_vector(data, length: int | None = None) -> Vector:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {arr.shape[0]}")
    return arr


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matvec(m: Matrix, v: Vector) -> Vector:
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix has {m.shape[1]} columns but vector has length {v.shape[0]}")
    return m @ v


def sigmoid(x):
    return expit(x)


def dsigmoid_from_output(s):
    """Derivative of the logistic function expressed through its output."""
    return s * (1.0 - s)


def dtanh_from_output(t):
    return 1.0 - t * t


_UNARY: dict[str, Callable] = {"sigmoid": sigmoid, "tanh": np.tanh}
_BINARY: dict[str, Callable] = {"mul": np.multiply, "add": np.add, "sub": np.subtract}


def elementwise(op: str, a: Vector, b: Vector | None = None) -> Vector:
    """Apply ``op`` in {sigmoid, tanh, mul, add, sub} element by element."""
    a = np.asarray(a, dtype=np.float64)
    if op in _UNARY:
        if b is not None:
            raise ParameterError(f"{op} is unary")
        return _UNARY[op](a)
    if op not in _BINARY:
        raise ParameterError(f"unknown elementwise op {op!r}")
    if b is None:
        raise ParameterError(f"{op} needs two operands")
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return _BINARY[op](a, b)


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** seeded through splitmix64.

    The algorithm (Blackman & Vigna, 2018) is fixed, so a given seed yields the
    same stream on every platform and release. Floats take the top 53 bits of
    each output: ``(next() >> 11) * 2**-53`` lies in [0, 1).

    Not thread-safe; give each training run its own instance.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = _splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        out = lo + (hi - lo) * u
        # lo + (hi-lo)*u can round up to hi for u just below 1
        return np.minimum(out, np.nextafter(hi, lo))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ParameterError("upper bound must be positive")
        bits = n.bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx, dtype=np.intp)

    def normal_array(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; used only for test fixtures and noise."""
        u1 = np.maximum(self.uniform_array(n), np.finfo(float).tiny)
        u2 = self.uniform_array(n)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def uniform_init(rng: Rng, rows: int, cols: int, lo: float, hi: float) -> Matrix:
    """Matrix of i.i.d. U[lo, hi) entries drawn row-major from ``rng``."""
    if not lo < hi:
        raise ParameterError(f"uniform_init needs lo < hi, got lo={lo}, hi={hi}")
    if rows < 0 or cols < 0:
        raise ParameterError("matrix dimensions must be non-negative")
    return rng.uniform_array(rows * cols, lo, hi).reshape(rows, cols)
