"""Brightness histogram with exact prefix statistics.

Counts and sums are kept as integers so range statistics are exact up to the
final division; squared error of a range is formed as
``(n * sum_sq - sum**2) / n`` from an exact integer numerator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptyImageError

__all__ = [
    "Histogram",
    "RangeStats",
    "build_histogram",
    "range_stats",
    "total_sse",
]

_INT64_SAFE = 2**62


@dataclass(frozen=True)
class RangeStats:
    n: int
    total: int
    sse: float

    @property
    def mean(self) -> float:
        if self.n == 0:
            return math.nan
        return self.total / self.n


class Histogram:
    """Per-level pixel counts over ``levels`` gray levels.

    Immutable after construction. ``prefix_count[g]`` is the number of pixels
    with level < g, and likewise for ``prefix_sum`` and ``prefix_sum_sq``.
    """

    def __init__(self, counts: Sequence[int] | np.ndarray):
        counts = np.asarray(counts)
        if counts.ndim != 1 or counts.size == 0:
            raise DomainError("histogram counts must be a non-empty 1-D array")
        if np.any(counts < 0):
            raise DomainError("histogram counts must be nonnegative")
        counts = counts.astype(np.int64)
        levels = np.arange(counts.size, dtype=np.int64)
        n_total = int(counts.sum())
        if n_total == 0:
            raise EmptyImageError("histogram has no pixels")
        sum_sq_bound = n_total * (counts.size - 1) ** 2
        dtype: type | np.dtype = np.int64 if sum_sq_bound < _INT64_SAFE else object
        if dtype is object:
            counts_o = np.array([int(c) for c in counts], dtype=object)
            levels_o = np.array([int(g) for g in levels], dtype=object)
            weighted = counts_o * levels_o
            weighted_sq = weighted * levels_o
        else:
            counts_o = counts
            weighted = counts * levels
            weighted_sq = weighted * levels

        def prefix(a: np.ndarray) -> np.ndarray:
            out = np.zeros(a.size + 1, dtype=dtype)
            out[1:] = np.cumsum(a)
            return out

        self.counts = counts
        self.counts.flags.writeable = False
        self.prefix_count = prefix(counts_o)
        self.prefix_sum = prefix(weighted)
        self.prefix_sum_sq = prefix(weighted_sq)
        for arr in (self.prefix_count, self.prefix_sum, self.prefix_sum_sq):
            arr.flags.writeable = False

    @property
    def levels(self) -> int:
        """Number of gray levels G."""
        return int(self.counts.size)

    @property
    def n(self) -> int:
        return int(self.prefix_count[-1])

    @cached_property
    def support(self) -> np.ndarray:
        """Gray levels with a nonzero count, ascending."""
        out = np.flatnonzero(self.counts)
        out.flags.writeable = False
        return out

    @property
    def distinct(self) -> int:
        """Number M of gray levels that actually occur."""
        return int(self.support.size)

    @property
    def total_sum(self) -> int:
        return int(self.prefix_sum[-1])

    @property
    def total_sum_sq(self) -> int:
        return int(self.prefix_sum_sq[-1])

    def negated(self) -> "Histogram":
        """Histogram of the negative image (g -> G - 1 - g)."""
        return Histogram(self.counts[::-1].copy())

    def sse_matrix(self) -> np.ndarray:
        """Squared error of every contiguous run of occupied levels.

        Entry ``[i, j]`` for ``0 <= i < j <= M`` holds the SSE of the pixels
        whose levels are ``support[i:j]``; all other entries are ``inf``.
        """
        return self._sse_matrix

    @cached_property
    def _sse_matrix(self) -> np.ndarray:
        sup = self.support
        # Boundaries at support[i] for i < M and at G for i == M.
        bounds = np.append(sup, self.levels)
        pc = self.prefix_count[bounds]
        ps = self.prefix_sum[bounds]
        pss = self.prefix_sum_sq[bounds]
        n = pc[None, :] - pc[:, None]
        s = ps[None, :] - ps[:, None]
        ss = pss[None, :] - pss[:, None]
        valid = np.triu(np.ones(n.shape, dtype=bool), k=1)
        n_safe = np.where(valid, n, 1)
        if n.dtype == object:
            num = n_safe * ss - s * s
            out = np.array(
                [[a / b for a, b in zip(r1, r2)] for r1, r2 in zip(num, n_safe)],
                dtype=float,
            )
        else:
            num = n_safe * ss - s * s
            out = num.astype(float) / n_safe.astype(float)
        out[~valid] = np.inf
        out.flags.writeable = False
        return out

    def __repr__(self) -> str:
        return f"Histogram(levels={self.levels}, n={self.n}, distinct={self.distinct})"


def build_histogram(pixels: Iterable[int] | np.ndarray, levels: int = 256) -> Histogram:
    """Count gray levels of ``pixels``, which must all lie in ``[0, levels)``."""
    arr = np.asarray(pixels)
    if arr.size == 0:
        raise EmptyImageError("cannot build a histogram of an empty image")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("pixel values must be integers")
        arr = arr.astype(np.int64)
    flat = arr.ravel()
    lo, hi = int(flat.min()), int(flat.max())
    if lo < 0 or hi >= levels:
        raise DomainError(f"pixel value out of range [0, {levels}): saw [{lo}, {hi}]")
    return Histogram(np.bincount(flat.astype(np.int64), minlength=levels))


def range_stats(h: Histogram, lo: int, hi: int) -> RangeStats:
    """Statistics of the pixels whose levels lie in ``[lo, hi)``; O(1)."""
    if not 0 <= lo < hi <= h.levels:
        raise DomainError(f"invalid level range [{lo}, {hi}) for {h.levels} levels")
    n = int(h.prefix_count[hi]) - int(h.prefix_count[lo])
    if n == 0:
        return RangeStats(0, 0, 0.0)
    s = int(h.prefix_sum[hi]) - int(h.prefix_sum[lo])
    ss = int(h.prefix_sum_sq[hi]) - int(h.prefix_sum_sq[lo])
    return RangeStats(n, s, (n * ss - s * s) / n)


def _check_thresholds(h: Histogram, thresholds: Sequence[int]) -> list[int]:
    ts = [int(t) for t in thresholds]
    for t in ts:
        if not 0 < t < h.levels:
            raise DomainError(f"threshold {t} outside (0, {h.levels})")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise DomainError("thresholds must be strictly increasing")
    return ts


def total_sse(h: Histogram, thresholds: Sequence[int]) -> float:
    """Total squared error E of the classes cut at ``thresholds``.

    A threshold ``t`` places levels ``< t`` and ``>= t`` in different classes.
    """
    ts = _check_thresholds(h, thresholds)
    edges = [0, *ts, h.levels]
    return math.fsum(range_stats(h, a, b).sse for a, b in zip(edges, edges[1:]))
