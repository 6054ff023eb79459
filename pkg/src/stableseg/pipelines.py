"""End-to-end flows: sigma-versus-m curves, rendering and colour segmentation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import engine
from .engine import Mode, PixelPartition, Scheduling, SubsetPolicy
from .errors import DomainError
from .histogram import Histogram, build_histogram
from .otsu import RangePartition, build_sequence, class_labels, dp_optimal_thresholds, dp_sequence

__all__ = [
    "CurvePoint",
    "curve_otsu",
    "curve_merge_only",
    "curve_merge_correct",
    "recorded_counts",
    "render_approximation",
    "color_componentwise",
    "boundary_length",
    "sigma_between",
    "curve_csv",
    "image_histogram",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvePoint:
    m: int
    sigma: float
    sse: float
    boundary: int | None
    method: str


def image_histogram(image: np.ndarray) -> Histogram:
    image = np.asarray(image)
    levels = max(256, int(image.max()) + 1)
    return build_histogram(image, levels)


def boundary_length(labels: np.ndarray) -> int:
    """Count of 4-adjacent pixel pairs carrying different labels."""
    labels = np.asarray(labels)
    return int(np.count_nonzero(labels[:, 1:] != labels[:, :-1])) + int(
        np.count_nonzero(labels[1:, :] != labels[:-1, :])
    )


def curve_otsu(image: np.ndarray, l: int = 3) -> list[CurvePoint]:
    """Optimal threshold approximation for every ``m`` from 1 to ``M``.

    Partitions come from the by-parts sequence builder and are checked
    against the exact dynamic program; if the builder falls short at some
    ``m`` the exact optimum is reported instead and a warning is logged.
    """
    image = np.asarray(image)
    h = image_histogram(image)
    points = []
    for fast, exact in zip(build_sequence(h, l), dp_sequence(h)):
        chosen = fast
        if fast.sse > exact.sse + 1e-9 * max(exact.sse, 1.0):
            log.warning(
                "by-parts optimum at m=%d is %.9g above the exact optimum; using the exact one",
                fast.m,
                fast.sse - exact.sse,
            )
            chosen = exact
        labels = class_labels(image, chosen.thresholds)
        points.append(CurvePoint(chosen.m, chosen.sigma, chosen.sse, boundary_length(labels), "otsu"))
    return points


def recorded_counts(n: int, dense_limit: int = 1000, sparse_points: int = 60) -> list[int]:
    """Set counts at which a merge curve is sampled, descending.

    Every count up to ``dense_limit`` is kept; above it counts are spaced
    logarithmically up to ``n``.
    """
    dense = set(range(1, min(n, dense_limit) + 1))
    if n > dense_limit:
        sparse = np.geomspace(dense_limit, n, sparse_points)
        dense.update(int(round(x)) for x in sparse)
        dense.add(n)
    return sorted(dense, reverse=True)


def _point(p: PixelPartition, method: str) -> CurvePoint:
    return CurvePoint(p.n_sets, p.sigma, p.energy, p.boundary_length, method)


def _merge_down(
    p: PixelPartition,
    targets: Sequence[int],
    method: str,
    scheduling: Scheduling,
    boundary_term: bool,
    correct: bool,
    m_min: int = 1,
) -> list[CurvePoint]:
    points = []
    wanted = set(targets)
    if p.n_sets in wanted:
        points.append(_point(p, method))
    ordered = sorted(wanted, reverse=True)
    for target in ordered:
        if target >= p.n_sets:
            continue
        if target < m_min:
            break
        while p.n_sets > target:
            merged = engine.merge_step(p, scheduling, boundary_term, limit=p.n_sets - target)
            if correct:
                seeds = set()
                for a, b, _ in merged:
                    survivor = a if a in p else b
                    seeds.add(survivor)
                    seeds.update(p.neighbours(survivor))
                engine.correct_until_stable(p, seeds)
        points.append(_point(p, method))
    return points


def curve_merge_only(
    image: np.ndarray,
    boundary_term: bool = False,
    scheduling: Scheduling | str = Scheduling.ABSORB,
    dense_limit: int = 1000,
    connectivity: int = 4,
) -> list[CurvePoint]:
    """Hierarchy of connected segments built by merging alone, from single pixels.

    With ``boundary_term`` pairs merge in order of error increase per unit of
    shared boundary; otherwise in order of error increase.
    """
    image = np.asarray(image)
    p = PixelPartition.singletons(image, mode=Mode.CONNECTED, connectivity=connectivity)
    method = "merge-flsa" if boundary_term else "merge"
    targets = recorded_counts(p.n_sets, dense_limit)
    return _merge_down(p, targets, method, Scheduling(scheduling), boundary_term, correct=False)


def start_partition(
    image: np.ndarray,
    start: str = "singletons",
    mode: Mode | str = Mode.RELAXED,
    subset: SubsetPolicy | str = SubsetPolicy.CLASS,
    connectivity: int = 4,
) -> PixelPartition:
    kwargs = dict(mode=Mode(mode), subset=SubsetPolicy(subset), connectivity=connectivity)
    if start == "singletons":
        return PixelPartition.singletons(image, **kwargs)
    if start == "brightness":
        return PixelPartition.brightness_classes(image, **kwargs)
    raise DomainError(f"unknown start partition {start!r}")


def segment(
    image: np.ndarray,
    m: int,
    mode: Mode | str = Mode.RELAXED,
    start: str = "singletons",
    subset: SubsetPolicy | str = SubsetPolicy.CLASS,
    scheduling: Scheduling | str = Scheduling.ABSORB,
    connectivity: int = 4,
) -> PixelPartition:
    """Merge and correct from ``start`` down to ``m`` stable sets."""
    p = start_partition(image, start, mode, subset, connectivity)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    engine.correct_until_stable(p)
    if m > p.n_sets:
        raise DomainError(f"start partition has only {p.n_sets} sets, cannot reach m={m}")
    _merge_down(p, [m], "segment", Scheduling(scheduling), False, correct=True)
    return p


def curve_merge_correct(
    image: np.ndarray,
    mode: Mode | str = Mode.RELAXED,
    start: str = "singletons",
    subset: SubsetPolicy | str = SubsetPolicy.CLASS,
    scheduling: Scheduling | str = Scheduling.ABSORB,
    dense_limit: int = 1000,
    connectivity: int = 4,
) -> list[CurvePoint]:
    """Alternate merging and correction to stability, recording sigma per set count."""
    image = np.asarray(image)
    mode = Mode(mode)
    p = start_partition(image, start, mode, subset, connectivity)
    engine.correct_until_stable(p)
    method = f"merge-correct-{mode.value}"
    targets = recorded_counts(p.n_sets, dense_limit)
    return _merge_down(p, targets, method, Scheduling(scheduling), False, correct=True)


def render_approximation(
    image: np.ndarray, partition: RangePartition | PixelPartition | np.ndarray
) -> np.ndarray:
    """Replace every pixel by its set's mean, rounded half up."""
    image = np.asarray(image, dtype=np.int64)
    if isinstance(partition, RangePartition):
        labels = class_labels(image, partition.thresholds)
    elif isinstance(partition, PixelPartition):
        labels = partition.labels
    else:
        labels = np.asarray(partition)
    if labels.shape != image.shape:
        raise DomainError("partition does not cover the image")
    _, compact = np.unique(labels.ravel(), return_inverse=True)
    n = np.bincount(compact)
    s = np.bincount(compact, weights=image.ravel().astype(np.float64))
    s = np.rint(s).astype(np.int64)
    # floor(s/n + 1/2) in exact integer arithmetic
    means = (2 * s + n) // (2 * n)
    return means[compact].reshape(image.shape)


def sigma_between(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return math.sqrt(float(np.mean(diff * diff)))


def color_componentwise(rgb: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Optimal ``m``-grade approximation of each RGB channel and their gray average.

    A channel with fewer than ``m`` distinct levels is reproduced exactly.
    The gray image is the per-pixel mean of the three rendered channels,
    rounded half up.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DomainError(f"expected a 3-channel image, got shape {rgb.shape}")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    out = np.empty(rgb.shape, dtype=np.int64)
    for c in range(3):
        channel = rgb[:, :, c].astype(np.int64)
        h = image_histogram(channel)
        part = dp_optimal_thresholds(h, min(m, h.distinct))
        out[:, :, c] = render_approximation(channel, part)
    gray = (2 * out.sum(axis=2) + 3) // 6
    return out, gray


def curve_csv(points: Iterable[CurvePoint]) -> str:
    """CSV text with header ``method,m,sigma,E,L``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "m", "sigma", "E", "L"])
    for pt in points:
        writer.writerow(
            [pt.method, pt.m, f"{pt.sigma:.6f}", f"{pt.sse:.6f}", "" if pt.boundary is None else pt.boundary]
        )
    return buf.getvalue()
