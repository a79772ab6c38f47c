# sitslab/numeric.py
from __future__ import annotations

import zlib
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import ArgumentError, ShapeError

# Weights, biases and series are plain float64 ndarrays.
Matrix = NDArray[np.float64]

__all__ = [
    "Matrix", "RngStream", "as_matrix", "matmul", "elementwise", "rng_uniform",
    "sigmoid", "softmax", "glorot_uniform", "check_finite",
]


def as_matrix(x) -> Matrix:
    return np.asarray(x, dtype=np.float64)


def check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ArgumentError(f"{name} contains non-finite values")


def matmul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: a{a.shape} is not compatible with b{b.shape}")
    return a @ b


_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(a, b, op: Literal["add", "sub", "mul"]) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: a{a.shape} vs b{b.shape}")
    if op not in _OPS:
        raise ArgumentError(f"unknown elementwise op '{op}'")
    return _OPS[op](a, b)


def sigmoid(x) -> Matrix:
    # sign-split form: never exponentiates a positive argument
    x = as_matrix(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x) -> Matrix:
    x = as_matrix(x)
    # logits spanning more than the float range overflow the shift to -inf; exp maps that to 0
    with np.errstate(over="ignore"):
        e = np.exp(x - np.max(x))
    return e / e.sum()


# ------------------------------ RANDOMNESS ------------------------------

def _key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


class RngStream:
    """Seeded PCG64 stream; ``substream`` derives independent named children.

    The bit generator is fully specified, so identical (seed, path) pairs give
    identical draws on every platform.
    """

    def __init__(self, seed: int, path: tuple = ()):
        if seed < 0:
            raise ArgumentError(f"seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key(p) for p in self.path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *names) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(names))

    def uniform(self, lo: float, hi: float, size) -> Matrix:
        return self.generator.uniform(lo, hi, size)

    def normal(self, scale: float, size) -> Matrix:
        return self.generator.normal(0.0, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, lo: int, hi: int, size=None):
        return self.generator.integers(lo, hi, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def rng_uniform(stream: RngStream, lo: float, hi: float, n: int) -> Matrix:
    if not lo < hi:
        raise ArgumentError(f"rng_uniform needs lo < hi, got [{lo}, {hi})")
    return stream.uniform(lo, hi, n)


def glorot_uniform(stream: RngStream, n_out: int, n_in: int) -> Matrix:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return stream.uniform(-limit, limit, (n_out, n_in))
