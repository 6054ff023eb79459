"""Optimal piecewise-constant approximation of gray images.

Exact and windowed multilevel thresholding over histograms, a merge and
correction engine for pixel partitions with a stability test, curve
pipelines and binary PNM I/O.
"""

from .engine import Mode, PixelPartition, Scheduling, SubsetPolicy
from .errors import DomainError, EmptyImageError, FormatError, InternalError, StableSegError
from .histogram import Histogram, build_histogram, range_stats, total_sse
from .otsu import RangePartition, build_sequence, by_parts_optimize, dp_optimal_thresholds, dp_sequence

__all__ = [
    "Histogram",
    "build_histogram",
    "range_stats",
    "total_sse",
    "RangePartition",
    "dp_optimal_thresholds",
    "dp_sequence",
    "build_sequence",
    "by_parts_optimize",
    "PixelPartition",
    "Mode",
    "SubsetPolicy",
    "Scheduling",
    "StableSegError",
    "DomainError",
    "EmptyImageError",
    "FormatError",
    "InternalError",
]
