"""Truncated Gaussian space: coordinates, sampling, and deterministic reductions.

Points live in natural coordinates ``x_j = <x, e_j>`` with respect to the
covariance eigenbasis, so ``x_j ~ N(0, lambda_j)`` independently.  The
standardized coordinates ``x_j / sqrt(lambda_j)`` are i.i.d. standard normal.
Cameron-Martin vectors are stored by their coefficients in the orthonormal
basis ``h_j = sqrt(lambda_j) e_j`` of H.

Sampling uses the counter-based Philox generator.  A run of ``count`` points
is cut into fixed chunks of ``CHUNK_SIZE`` rows; chunk ``c`` of seed ``s`` is
drawn from the generator keyed by ``(s, c)``.  Reductions combine per-chunk
statistics in chunk order, so results do not depend on how many threads
evaluate the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

from .errors import ConfigError
from .spectrum import Spectrum, make_spectrum

CHUNK_SIZE = 1 << 16
#: Chunk counters at and above this value belong to the resampling stream.
REPLACEMENT_BASE = 1 << 62
THREADS_ENV = "GAUSSPERIM_THREADS"

T = TypeVar("T")


@dataclass(frozen=True)
class TruncatedSpace:
    """The finite-dimensional factor ``gamma_n`` of ``gamma = gamma_n x gamma_n^perp``."""

    spectrum: Spectrum
    n: int
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    sqrt_lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "spectrum", make_spectrum(self.spectrum))
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"dimension must be a positive integer, got {self.n}")
        lam = self.spectrum.eigenvalues(int(self.n))
        lam.setflags(write=False)
        sq = np.sqrt(lam)
        sq.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sqrt_lam", sq)

    @property
    def trace(self) -> float:
        return math.fsum(self.lam)

    @property
    def lambda_max(self) -> float:
        return float(self.lam[0])

    def standardize(self, x):
        return np.asarray(x, dtype=float) / self.sqrt_lam

    def destandardize(self, z):
        return np.asarray(z, dtype=float) * self.sqrt_lam

    def hcoords_to_natural(self, v):
        """Natural coordinates of the H-vector with h-coefficients ``v``."""
        return np.asarray(v, dtype=float) * self.sqrt_lam

    def check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ConfigError(f"point dimension {x.shape[-1]} does not match space dimension {self.n}")
        return x


def cm_norm(v) -> np.ndarray | float:
    """H-norm of vectors given by h-coefficients (last axis)."""
    v = np.asarray(v, dtype=float)
    out = np.sqrt(np.sum(v * v, axis=-1))
    return float(out) if out.ndim == 0 else out


# -- random streams -----------------------------------------------------------


def _philox(seed: int, counter: int) -> np.random.Generator:
    if not 0 <= seed < 1 << 64:
        raise ConfigError(f"seed must be in [0, 2**64), got {seed}")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(counter)))


def draw_standard(seed: int, counter: int, rows: int, n: int) -> np.ndarray:
    """Standard normals for one chunk, shape ``(rows, n)``.

    Coordinates are drawn coordinate-major: column ``j`` is the same for
    every dimension ``n > j``, which gives common random numbers across a
    dimension sweep.
    """
    return _philox(seed, counter).standard_normal((n, rows)).T


def chunk_spans(count: int) -> list[tuple[int, int]]:
    """Fixed ``(counter, rows)`` layout of a run of ``count`` points."""
    if count < 0:
        raise ConfigError("sample count must be non-negative")
    full, rem = divmod(int(count), CHUNK_SIZE)
    spans = [(c, CHUNK_SIZE) for c in range(full)]
    if rem:
        spans.append((full, rem))
    return spans


def iter_chunks(space: TruncatedSpace, count: int, seed: int) -> Iterator[np.ndarray]:
    """Yield the sample in natural coordinates, one chunk at a time."""
    for counter, rows in chunk_spans(count):
        yield draw_standard(seed, counter, rows, space.n) * space.sqrt_lam


def sample(space: TruncatedSpace, count: int, seed: int) -> np.ndarray:
    """``count`` points of ``gamma_n`` as a ``(count, n)`` array."""
    if count < 1:
        raise ConfigError("sample count must be >= 1")
    return np.concatenate(list(iter_chunks(space, count, seed)), axis=0)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def map_chunks(
    space: TruncatedSpace,
    count: int,
    seed: int,
    kernel: Callable[[np.ndarray], T],
    *,
    first_counter: int = 0,
    threads: int | None = None,
) -> list[T]:
    """Apply ``kernel`` to every chunk; results come back in chunk order."""
    spans = [(first_counter + c, rows) for c, rows in chunk_spans(count)]

    def work(span):
        counter, rows = span
        return kernel(draw_standard(seed, counter, rows, space.n) * space.sqrt_lam)

    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(spans) <= 1:
        return [work(s) for s in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, spans))


# -- moment accumulation --------------------------------------------------------


@dataclass
class Moments:
    """Column-wise count, mean and centered sum of squares."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, width: int) -> "Moments":
        return cls(0, np.zeros(width), np.zeros(width))

    @classmethod
    def of(cls, y: np.ndarray) -> "Moments":
        y = np.asarray(y, dtype=float)
        if y.shape[0] == 0:
            return cls.empty(y.shape[1])
        mean = y.mean(axis=0)
        dev = y - mean
        return cls(y.shape[0], mean, np.einsum("ij,ij->j", dev, dev))

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        """Unbiased sample variance."""
        if self.count < 2:
            return np.full_like(self.mean, np.nan)
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count) if self.count else np.full_like(self.mean, np.nan)


def reduce_moments(parts: Sequence[Moments]) -> Moments:
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total
