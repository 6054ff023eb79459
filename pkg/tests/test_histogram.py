import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stableseg.errors import DomainError, EmptyImageError
from stableseg.histogram import Histogram, build_histogram, range_stats, total_sse


def brute_sse(values):
    if not values:
        return 0.0
    mean = sum(values) / len(values)
    return math.fsum((v - mean) ** 2 for v in values)


def test_build_counts():
    h = build_histogram([2, 2, 2], 4)
    assert h.counts.tolist() == [0, 0, 3, 0]
    assert h.n == 3
    h = build_histogram([0, 1, 0, 3], 4)
    assert h.counts.tolist() == [2, 1, 0, 1]
    assert h.n == 4 and h.distinct == 3


def test_build_errors():
    with pytest.raises(EmptyImageError):
        build_histogram([], 4)
    with pytest.raises(DomainError):
        build_histogram([0, 4], 4)
    with pytest.raises(DomainError):
        build_histogram([-1], 4)


def test_range_stats_examples():
    r = range_stats(build_histogram([2, 2, 2], 4), 0, 4)
    assert (r.n, r.mean, r.sse) == (3, 2.0, 0.0)
    r = range_stats(build_histogram([1, 3], 4), 0, 4)
    assert (r.n, r.mean, r.sse) == (2, 2.0, 2.0)
    r = range_stats(build_histogram([0, 5, 10], 256), 5, 11)
    assert (r.n, r.mean, r.sse) == (2, 7.5, 12.5)


def test_range_stats_empty_and_invalid():
    h = build_histogram([0, 5], 8)
    r = range_stats(h, 1, 5)
    assert r.n == 0 and r.total == 0 and r.sse == 0.0 and math.isnan(r.mean)
    with pytest.raises(DomainError):
        range_stats(h, 3, 3)


def test_total_sse_examples():
    h = build_histogram([0, 5, 10], 256)
    assert total_sse(h, [5]) == 12.5
    assert total_sse(h, []) == pytest.approx(brute_sse([0, 5, 10]))
    assert total_sse(build_histogram([0, 0, 10, 10], 256), [5]) == 0.0
    with pytest.raises(DomainError):
        total_sse(h, [6, 5])
    with pytest.raises(DomainError):
        total_sse(h, [5, 5])
    with pytest.raises(DomainError):
        total_sse(h, [0])


def test_sse_matrix_layout():
    h = build_histogram([0, 5, 10], 16)
    cost = h.sse_matrix()
    assert cost.shape == (4, 4)
    assert cost[0, 3] == pytest.approx(brute_sse([0, 5, 10]))
    assert cost[1, 3] == 12.5
    assert np.isinf(cost[2, 1]) and np.isinf(cost[1, 1])


def test_large_counts_stay_exact():
    # forces the arbitrary-precision prefix path
    h = Histogram(np.array([2**40, 0, 0, 2**40], dtype=np.int64))
    r = range_stats(h, 0, 4)
    assert r.n == 2**41
    assert r.sse == pytest.approx(2**41 * 2.25, rel=1e-12)


pixel_lists = st.lists(st.integers(0, 63), min_size=1, max_size=60)


@given(pixel_lists)
def test_prefix_invariants(pixels):
    h = build_histogram(pixels, 64)
    assert h.prefix_count[-1] == h.n == len(pixels)
    for arr in (h.prefix_count, h.prefix_sum, h.prefix_sum_sq):
        assert np.all(np.diff(arr.astype(np.int64)) >= 0)
    assert h.distinct == len(set(pixels))
    assert h.total_sum_sq - h.total_sum**2 / h.n >= -1e-9


@given(pixel_lists, st.integers(0, 63), st.integers(1, 64))
def test_range_sse_matches_brute_force(pixels, lo, hi):
    if lo >= hi:
        lo, hi = hi - 1, lo + 1
    h = build_histogram(pixels, 64)
    r = range_stats(h, lo, hi)
    inside = [p for p in pixels if lo <= p < hi]
    assert r.n == len(inside)
    assert r.sse == pytest.approx(brute_sse(inside), rel=1e-9, abs=1e-9)


@settings(max_examples=60)
@given(pixel_lists, st.sets(st.integers(1, 63), max_size=6), st.integers(1, 63))
def test_refinement_never_increases_sse(pixels, cuts, extra):
    h = build_histogram(pixels, 64)
    base = sorted(cuts)
    finer = sorted(set(base) | {extra})
    assert total_sse(h, finer) <= total_sse(h, base) + 1e-9


@given(pixel_lists)
def test_all_thresholds_zero_error(pixels):
    h = build_histogram(pixels, 64)
    assert total_sse(h, [int(g) for g in h.support[1:]]) == 0.0
