"""Multilevel Otsu thresholding: optimal brightness-range partitions.

Two solvers live here. :func:`dp_optimal_thresholds` is an exact dynamic
program over the occupied gray levels. :func:`build_sequence` produces the
whole family of optimal partitions for ``m = 1 .. M`` by growing and
shrinking the number of ranges one at a time and polishing each candidate
with :func:`by_parts_optimize`, a windowed exhaustive search over ``l``
consecutive ranges.

Internally partitions are handled as *cuts*: indices into
``Histogram.support``. A cut ``c`` separates ``support[:c]`` from
``support[c:]`` and maps to the threshold ``support[c]``, the smallest
occupied level of the right-hand class. This makes equal-error partitions
share one canonical threshold vector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .histogram import Histogram, total_sse

__all__ = [
    "RangePartition",
    "dp_optimal_thresholds",
    "dp_sequence",
    "by_parts_optimize",
    "build_sequence",
    "negate_invariance_check",
    "partition_from_thresholds",
    "class_labels",
]

# Relative slack for treating two floating squared errors as equal. Range
# costs carry ~1e-16 relative error, so this only absorbs rounding.
_REL_TIE = 1e-12


@dataclass(frozen=True)
class RangePartition:
    """Division of the occupied gray range into ``m`` contiguous classes."""

    m: int
    thresholds: tuple[int, ...]
    sse: float
    sigma: float

    def classes(self, h: Histogram) -> list[tuple[int, ...]]:
        """Occupied gray levels of each class, left to right."""
        sup = [int(g) for g in h.support]
        edges = [0, *(_cut_of(h, t) for t in self.thresholds), len(sup)]
        return [tuple(sup[a:b]) for a, b in zip(edges, edges[1:])]


def _cut_of(h: Histogram, threshold: int) -> int:
    return int(np.searchsorted(h.support, threshold, side="left"))


def _from_cuts(h: Histogram, cuts: Sequence[int]) -> RangePartition:
    thresholds = tuple(int(h.support[c]) for c in cuts)
    sse = total_sse(h, thresholds)
    return RangePartition(len(cuts) + 1, thresholds, sse, math.sqrt(sse / h.n))


def partition_from_thresholds(h: Histogram, thresholds: Sequence[int]) -> RangePartition:
    """Validate ``thresholds`` and return the canonical partition they induce.

    Every class must contain at least one pixel.
    """
    ts = [int(t) for t in thresholds]
    if any(not 0 < t < h.levels for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise DomainError("thresholds must be strictly increasing inside (0, G)")
    cuts = [_cut_of(h, t) for t in ts]
    if any(c == 0 or c == h.distinct for c in cuts) or len(set(cuts)) != len(cuts):
        raise DomainError("every class must contain at least one pixel")
    return _from_cuts(h, cuts)


def _cuts_of(h: Histogram, p: RangePartition) -> list[int]:
    return [_cut_of(h, t) for t in p.thresholds]


def _cost_of(cost: np.ndarray, cuts: Sequence[int], n_levels: int) -> float:
    edges = [0, *cuts, n_levels]
    return math.fsum(cost[a, b] for a, b in zip(edges, edges[1:]))


def _check_m(h: Histogram, m: int) -> None:
    if m < 1:
        raise DomainError(f"class count must be >= 1, got {m}")
    if m > h.distinct:
        raise DomainError(
            f"class count {m} exceeds the {h.distinct} occupied gray levels"
        )


# ---------------------------------------------------------------------------
# exact dynamic program


def _suffix_table(cost: np.ndarray, m: int) -> np.ndarray:
    """``S[j, k]``: least SSE splitting ``support[k:]`` into ``j`` classes."""
    size = cost.shape[0]
    table = np.full((m + 1, size), np.inf)
    table[1] = cost[:, -1]
    for j in range(2, m + 1):
        table[j] = np.min(cost + table[j - 1][None, :], axis=1)
    return table


def _prefix_table(cost: np.ndarray, m: int) -> np.ndarray:
    """``P[j, i]``: least SSE splitting ``support[:i]`` into ``j`` classes."""
    size = cost.shape[0]
    table = np.full((m + 1, size), np.inf)
    table[1] = cost[0, :]
    for j in range(2, m + 1):
        table[j] = np.min(table[j - 1][:, None] + cost, axis=0)
    return table


def _extract_left(cost: np.ndarray, suffix: np.ndarray, m: int) -> list[int]:
    # Greedy left to right: the smallest cut that still reaches the optimum
    # gives the lexicographically smallest cut vector.
    cuts: list[int] = []
    k = 0
    for j in range(m, 1, -1):
        target = suffix[j, k]
        vals = cost[k, :] + suffix[j - 1, :]
        c = int(np.flatnonzero(vals <= target + _REL_TIE * target)[0])
        cuts.append(c)
        k = c
    return cuts


def _extract_right(cost: np.ndarray, prefix: np.ndarray, m: int) -> list[int]:
    # Mirror of _extract_left: the largest admissible last cut first.
    cuts: list[int] = []
    i = cost.shape[0] - 1
    for j in range(m, 1, -1):
        target = prefix[j, i]
        vals = prefix[j - 1, :] + cost[:, i]
        c = int(np.flatnonzero(vals <= target + _REL_TIE * target)[-1])
        cuts.append(c)
        i = c
    return cuts[::-1]


def dp_optimal_thresholds(h: Histogram, m: int) -> RangePartition:
    """Globally optimal ``m``-class threshold partition.

    Runs in O(M^2 m). Among equal-error optima the lexicographically smallest
    canonical threshold vector is returned.
    """
    _check_m(h, m)
    cost = h.sse_matrix()
    return _from_cuts(h, _extract_left(cost, _suffix_table(cost, m), m))


def dp_sequence(h: Histogram, m_max: int | None = None) -> list[RangePartition]:
    """Optimal partitions for every ``m`` in ``1 .. m_max`` (default ``M``)."""
    m_max = h.distinct if m_max is None else m_max
    _check_m(h, m_max)
    cost = h.sse_matrix()
    suffix = _suffix_table(cost, m_max)
    return [_from_cuts(h, _extract_left(cost, suffix, m)) for m in range(1, m_max + 1)]


# ---------------------------------------------------------------------------
# windowed ("by parts") optimisation


class _WindowSearch:
    """Exhaustive best placement of interior cuts inside a window of ranges.

    For two- and three-range windows the answer for every outer pair
    ``(a, b)`` is tabulated once by min-plus products over the range-cost
    matrix, turning each window visit into a lookup. Wider windows are
    enumerated on demand.
    """

    def __init__(self, cost: np.ndarray, l: int):
        self.cost = cost
        size = cost.shape[0]
        self.best2 = np.full((size, size), np.inf)
        self.arg2 = np.zeros((size, size), dtype=np.int64)
        for a in range(size):
            vals = cost[a, :, None] + cost
            self.arg2[a] = np.argmin(vals, axis=0)
            self.best2[a] = vals[self.arg2[a], np.arange(size)]
        if l >= 3:
            self.best3 = np.full((size, size), np.inf)
            self.arg3 = np.zeros((size, size), dtype=np.int64)
            for a in range(size):
                vals = self.best2[a, :, None] + cost
                self.arg3[a] = np.argmin(vals, axis=0)
                self.best3[a] = vals[self.arg3[a], np.arange(size)]

    def __call__(self, a: int, b: int, parts: int) -> tuple[float, list[int]]:
        if parts == 2:
            return float(self.best2[a, b]), [int(self.arg2[a, b])]
        if parts == 3:
            c2 = int(self.arg3[a, b])
            return float(self.best3[a, b]), [int(self.arg2[a, c2]), c2]
        return self._enumerate(a, b, parts)

    def _enumerate(self, a: int, b: int, parts: int) -> tuple[float, list[int]]:
        cost = self.cost
        best_val, best_cuts = math.inf, []
        for head in itertools.combinations(range(a + 1, b), parts - 3):
            first = head[-1] if head else a
            val = cost[a, head[0]] if head else 0.0
            val += sum(cost[x, y] for x, y in zip(head, head[1:]))
            tail = self.best3[first, b]
            if val + tail < best_val:
                c2 = int(self.arg3[first, b])
                best_val = val + tail
                best_cuts = [*head, int(self.arg2[first, c2]), c2]
        return best_val, best_cuts


def _by_parts_cuts(
    search: _WindowSearch, cuts: list[int], l: int, max_sweeps: int | None = None
) -> list[int]:
    cost = search.cost
    n_levels = cost.shape[0] - 1
    m = len(cuts) + 1
    if m == 1 or m == n_levels:
        return cuts
    width = min(l, m)
    bounds = [0, *cuts, n_levels]
    sweeps = 0
    while max_sweeps is None or sweeps < max_sweeps:
        sweeps += 1
        changed = False
        for w in range(m - width + 1):
            a, b = bounds[w], bounds[w + width]
            current = 0.0
            for x, y in zip(bounds[w : w + width], bounds[w + 1 : w + width + 1]):
                current += cost[x, y]
            val, inner = search(a, b, width)
            if val < current - _REL_TIE * current:
                bounds[w + 1 : w + width] = inner
                changed = True
        if not changed:
            break
    return bounds[1:-1]


def by_parts_optimize(
    h: Histogram, start: RangePartition, l: int = 3, max_sweeps: int | None = None
) -> RangePartition:
    """Re-optimise ``start`` over every window of ``l`` consecutive ranges.

    Each window's interior thresholds are chosen by exhaustive search with
    the window's outer thresholds held fixed; a window changes only when
    that strictly lowers the error. Windows are visited left to right and
    sweeps repeat until one changes nothing (or ``max_sweeps`` is reached).
    """
    if l < 2:
        raise DomainError(f"window size must be >= 2, got {l}")
    cuts = _cuts_of(h, start)
    search = _WindowSearch(h.sse_matrix(), min(l, 3))
    return _from_cuts(h, _by_parts_cuts(search, cuts, l, max_sweeps))


def _split_candidates(search: _WindowSearch, cuts: list[int], n_levels: int) -> list[list[int]]:
    """``cuts`` plus the best single split of each range, best split first."""
    bounds = [0, *cuts, n_levels]
    scored = []
    for a, b in zip(bounds, bounds[1:]):
        if b - a < 2:
            continue
        val, (c,) = search(a, b, 2)
        scored.append((val - search.cost[a, b], c))
    scored.sort()
    return [sorted([*cuts, c]) for _, c in scored]


def _best_merge(cost: np.ndarray, cuts: list[int], n_levels: int) -> list[int]:
    """``cuts`` with the cut whose removal raises the error least dropped."""
    bounds = [0, *cuts, n_levels]
    growth = [cost[bounds[i], bounds[i + 2]] - cost[bounds[i], c] - cost[c, bounds[i + 2]]
              for i, c in enumerate(cuts)]
    i = int(np.argmin(growth))
    return cuts[:i] + cuts[i + 1 :]


def build_sequence(h: Histogram, l: int = 3) -> list[RangePartition]:
    """Optimal threshold partitions for every ``m`` from 1 to ``M``.

    The partitions for ``m = 1`` and ``m = M`` are trivial. Intermediate
    ones come from two directions. Going up, the best partition for ``m``
    is split once more, trying the best split point of every range in turn
    (best-gain range first); going down, the adjacent pair whose union
    raises the error least is merged. Every candidate is polished with
    :func:`by_parts_optimize` and the lowest-error result is kept. Both
    directions repeat, always seeded from the best partition known for the
    neighbouring ``m``, until nothing improves.
    """
    if l < 2:
        raise DomainError(f"window size must be >= 2, got {l}")
    cost = h.sse_matrix()
    M = h.distinct
    search = _WindowSearch(cost, min(l, 3))
    best: dict[int, list[int]] = {1: [], M: list(range(1, M))}
    score: dict[int, float] = {1: _cost_of(cost, [], M), M: 0.0}

    def offer(m: int, cuts: list[int]) -> bool:
        val = _cost_of(cost, cuts, M)
        old = score.get(m)
        if old is None or val < old - _REL_TIE * old:
            best[m], score[m] = cuts, val
            return True
        if val <= old + _REL_TIE * old and cuts < best[m]:
            best[m] = cuts
            return True
        return False

    changed = True
    while changed:
        changed = False
        for m in range(2, M):
            for split in _split_candidates(search, best[m - 1], M):
                changed |= offer(m, _by_parts_cuts(search, split, l))
        for m in range(M - 1, 1, -1):
            merged = _best_merge(cost, best[m + 1], M)
            changed |= offer(m, _by_parts_cuts(search, merged, l))
    return [_from_cuts(h, best[m]) for m in range(1, M + 1)]


# ---------------------------------------------------------------------------
# negative-image check


def negate_invariance_check(h: Histogram, m: int) -> bool:
    """Whether the negative image has the same optimal pixel classes.

    The optimum of the negated histogram is reflected back to the original
    levels and compared class by class. Equal-error ties on the negated side
    are broken in the mirrored order so the same rule applies to both.
    """
    _check_m(h, m)
    cost = h.sse_matrix()
    direct = _extract_left(cost, _suffix_table(cost, m), m)
    neg = h.negated()
    neg_cost = neg.sse_matrix()
    mirrored = _extract_right(neg_cost, _prefix_table(neg_cost, m), m)
    M = h.distinct
    return sorted(M - c for c in mirrored) == direct


def class_labels(image: np.ndarray, thresholds: Sequence[int]) -> np.ndarray:
    """Label every pixel with the index of its brightness class."""
    return np.searchsorted(np.asarray(thresholds, dtype=np.int64), image, side="right")
