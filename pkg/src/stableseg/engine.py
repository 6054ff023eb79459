"""Pixel-set partitions refined by merging and correction.

A :class:`PixelPartition` holds a labelling of image pixels into sets along
with each set's pixel count and intensity sum, the adjacency graph between
sets (weighted by shared boundary length), and the member pixels of each set
grouped by gray level. All squared-error bookkeeping is incremental: a merge
or a reclassification changes the tracked error by a closed-form increment
computed from counts and sums only.

Two operations modify a partition:

* merging two adjacent sets (:func:`merge_step`), which removes one set;
* correction (:func:`correction_pass`), which moves a subset of equally
  bright pixels from a donor set to an adjacent recipient when that lowers
  the error, keeping the number of sets.

A partition is *stable* when no admissible correction lowers the error.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptyImageError, InternalError

__all__ = [
    "Mode",
    "SubsetPolicy",
    "Scheduling",
    "SetStats",
    "MoveDelta",
    "Move",
    "PixelPartition",
    "alpha",
    "delta_e_merge",
    "delta_e_correct",
    "correction_sign",
    "merge_step",
    "correction_pass",
    "correct_until_stable",
    "correct_by_priority",
    "find_violation",
    "is_stable",
    "full_sse_rescan",
]


class Mode(str, Enum):
    """Whether every set must stay a connected pixel region."""

    CONNECTED = "connected"
    RELAXED = "relaxed"


class SubsetPolicy(str, Enum):
    """Unit of reclassification: one pixel or all pixels of one gray level."""

    PIXEL = "pixel"
    CLASS = "class"


class Scheduling(str, Enum):
    EXACT = "exact"
    ABSORB = "absorb"


@dataclass(frozen=True)
class SetStats:
    n: int
    total: int

    @property
    def mean(self) -> float:
        return self.total / self.n


@dataclass(frozen=True)
class MoveDelta:
    kind: str
    k: int
    mean: float
    delta_e: float
    alpha: float | None = None


@dataclass(frozen=True)
class Move:
    """A concrete admissible reclassification found in a partition."""

    donor: int
    recipient: int
    gray: int
    pixels: tuple[int, ...]
    delta: MoveDelta


# ---------------------------------------------------------------------------
# closed-form increments


def alpha(n1: int, n2: int, k: int) -> float:
    """Population factor of the correction criterion, ``< 1`` for ``0 < k < n1``."""
    return math.sqrt(n2 * (n1 - k) / (n1 * (n2 + k)))


def delta_e_merge(a: SetStats, b: SetStats) -> float:
    """Increase of the squared error when ``a`` and ``b`` are merged."""
    diff = a.total * b.n - b.total * a.n
    return diff * diff / (a.n * b.n * (a.n + b.n))


def _merge_increment(n1: int, s1: int, n2: int, s2: int) -> float:
    diff = s1 * n2 - s2 * n1
    return diff * diff / (n1 * n2 * (n1 + n2))


def _correct_parts(n1: int, s1: int, n2: int, s2: int, k: int, sk: int) -> tuple[int, int, int]:
    # With I = sk/k, I1 = s1/n1, I2 = s2/n2:
    #   dE = a^2 / (k n2 (n2+k)) - b^2 / (k n1 (n1-k))
    # where a = sk*n2 - s2*k and b = sk*n1 - s1*k.
    a = sk * n2 - s2 * k
    b = sk * n1 - s1 * k
    num = a * a * n1 * (n1 - k) - b * b * n2 * (n2 + k)
    den = k * n1 * n2 * (n2 + k) * (n1 - k)
    return num, den, a


def correction_sign(n1: int, s1: int, n2: int, s2: int, k: int, sk: int) -> int:
    """Exact sign of the error change for moving ``k`` pixels summing to ``sk``.

    All arguments are integers, so zero is detected exactly.
    """
    num, _, _ = _correct_parts(n1, s1, n2, s2, k, sk)
    return (num > 0) - (num < 0)


def _correct_increment(n1: int, s1: int, n2: int, s2: int, k: int, sk: int) -> float:
    num, den, _ = _correct_parts(n1, s1, n2, s2, k, sk)
    return num / den


def delta_e_correct(donor: SetStats, recipient: SetStats, k: int, mean: float) -> MoveDelta:
    """Error change when ``k`` pixels of mean ``mean`` leave ``donor`` for ``recipient``.

    The increment is exact for any moved subset, homogeneous or not: the
    subset's own scatter is carried unchanged by the move.
    """
    n1, n2 = donor.n, recipient.n
    if k >= n1:
        raise DomainError(f"moving k={k} of {n1} pixels is a merge, not a correction")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    sk = mean * k
    if isinstance(mean, int) or float(sk).is_integer():
        de = _correct_increment(n1, donor.total, n2, recipient.total, k, int(round(sk)))
    else:
        i1, i2 = donor.mean, recipient.mean
        de = k * n2 / (k + n2) * (mean - i2) ** 2 - k * n1 / (n1 - k) * (mean - i1) ** 2
    return MoveDelta("correct", k, float(mean), de, alpha(n1, n2, k))


# ---------------------------------------------------------------------------
# partition


def _neighbour_table(height: int, width: int, connectivity: int) -> list[tuple[int, ...]]:
    if connectivity == 4:
        offsets = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    elif connectivity == 8:
        offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        raise DomainError(f"connectivity must be 4 or 8, got {connectivity}")
    table = []
    for y in range(height):
        for x in range(width):
            table.append(
                tuple(
                    (y + dy) * width + (x + dx)
                    for dy, dx in offsets
                    if 0 <= y + dy < height and 0 <= x + dx < width
                )
            )
    return table


def _pairs(height: int, width: int, connectivity: int) -> list[tuple[np.ndarray, np.ndarray]]:
    idx = np.arange(height * width).reshape(height, width)
    out = [(idx[:, :-1].ravel(), idx[:, 1:].ravel()), (idx[:-1, :].ravel(), idx[1:, :].ravel())]
    if connectivity == 8:
        out.append((idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()))
        out.append((idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()))
    return out


class PixelPartition:
    """Mutable partition of an image's pixels into sets.

    Parameters
    ----------
    image : 2-D integer array
    labels : 2-D integer array of the same shape
        Initial set of every pixel; sets are renumbered ``0 .. K-1`` in
        ascending order of the given label values.
    mode : Mode
        ``CONNECTED`` keeps every set a connected region; ``RELAXED`` only
        requires donor and recipient of a correction to be adjacent sets.
    subset : SubsetPolicy
        Unit of reclassification during correction.
    connectivity : {4, 8}
        Pixel neighbourhood used for adjacency and connectivity.

    Not safe for concurrent mutation.
    """

    def __init__(
        self,
        image: np.ndarray,
        labels: np.ndarray,
        mode: Mode | str = Mode.RELAXED,
        subset: SubsetPolicy | str = SubsetPolicy.CLASS,
        connectivity: int = 4,
    ):
        image = np.asarray(image)
        labels = np.asarray(labels)
        if image.ndim != 2:
            raise DomainError("image must be 2-D grayscale")
        if image.size == 0:
            raise EmptyImageError("image has no pixels")
        if labels.shape != image.shape:
            raise DomainError("labels must match the image shape")
        if not np.issubdtype(image.dtype, np.integer) or image.min() < 0:
            raise DomainError("image samples must be nonnegative integers")
        self.mode = Mode(mode)
        self.subset = SubsetPolicy(subset)
        self.connectivity = connectivity
        self.shape = image.shape
        height, width = image.shape
        self._nbrs = _neighbour_table(height, width, connectivity)

        _, compact = np.unique(labels.ravel(), return_inverse=True)
        compact = compact.astype(np.int64)
        pix = image.ravel().astype(np.int64)
        self.image = pix.reshape(self.shape)
        self._pix: list[int] = pix.tolist()
        self._lab: list[int] = compact.tolist()

        self._n: dict[int, int] = {}
        self._s: dict[int, int] = {}
        self._members: dict[int, dict[int, set[int]]] = {}
        for p, (g, lab) in enumerate(zip(self._pix, self._lab)):
            if lab not in self._n:
                self._n[lab] = 0
                self._s[lab] = 0
                self._members[lab] = {}
            self._n[lab] += 1
            self._s[lab] += g
            self._members[lab].setdefault(g, set()).add(p)

        self._adj: dict[int, dict[int, int]] = {i: {} for i in self._n}
        boundary = 0
        for a_idx, b_idx in _pairs(height, width, connectivity):
            la, lb = compact[a_idx], compact[b_idx]
            diff = la != lb
            la, lb = la[diff], lb[diff]
            boundary += int(diff.sum())
            lo, hi = np.minimum(la, lb), np.maximum(la, lb)
            keys, counts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True) if lo.size else (np.empty((0, 2), int), [])
            for (a, b), c in zip(keys.tolist(), list(counts)):
                self._adj[a][b] = self._adj[a].get(b, 0) + int(c)
                self._adj[b][a] = self._adj[b].get(a, 0) + int(c)
        self._boundary = boundary

        self.total_sq = int(np.dot(pix, pix)) if pix.max() < 2**31 else sum(g * g for g in self._pix)
        self._energy = 0.0
        self._energy_comp = 0.0
        self._add_energy(full_sse_rescan(self))
        self._heap: list | None = None
        self._heap_flsa = False

        if self.mode is Mode.CONNECTED:
            for i in self._n:
                if not self._is_connected(i, ()):
                    raise DomainError(f"set {i} is not a connected region")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def singletons(cls, image: np.ndarray, **kwargs) -> "PixelPartition":
        """Every pixel in its own set."""
        image = np.asarray(image)
        return cls(image, np.arange(image.size).reshape(image.shape), **kwargs)

    @classmethod
    def brightness_classes(cls, image: np.ndarray, **kwargs) -> "PixelPartition":
        """One set per gray level.

        In connected mode a gray level's pixels may be scattered, so each
        connected run of equal brightness becomes its own set instead.
        """
        image = np.asarray(image)
        mode = Mode(kwargs.get("mode", Mode.RELAXED))
        if mode is Mode.RELAXED:
            return cls(image, image, **kwargs)
        from scipy import ndimage

        structure = ndimage.generate_binary_structure(2, 1 if kwargs.get("connectivity", 4) == 4 else 2)
        labels = np.zeros(image.shape, dtype=np.int64)
        offset = 0
        for g in np.unique(image):
            comp, count = ndimage.label(image == g, structure=structure)
            labels[comp > 0] = comp[comp > 0] + offset
            offset += count
        return cls(image, labels, **kwargs)

    # -- queries ---------------------------------------------------------------

    def __contains__(self, i: object) -> bool:
        return i in self._n

    @property
    def n_pixels(self) -> int:
        return len(self._pix)

    @property
    def n_sets(self) -> int:
        return len(self._n)

    @property
    def energy(self) -> float:
        """Incrementally tracked total squared error E."""
        return self._energy + self._energy_comp

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.energy, 0.0) / self.n_pixels)

    @property
    def boundary_length(self) -> int:
        """Number of neighbouring pixel pairs that lie in different sets."""
        return self._boundary

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self._lab, dtype=np.int64).reshape(self.shape)

    def set_ids(self) -> list[int]:
        return sorted(self._n)

    def stats(self, i: int) -> SetStats:
        return SetStats(self._n[i], self._s[i])

    @property
    def sets(self) -> dict[int, SetStats]:
        return {i: SetStats(self._n[i], self._s[i]) for i in sorted(self._n)}

    def neighbours(self, i: int) -> list[int]:
        return sorted(self._adj[i])

    @property
    def adjacency(self) -> dict[int, list[int]]:
        return {i: sorted(self._adj[i]) for i in sorted(self._adj)}

    def shared_boundary(self, a: int, b: int) -> int:
        return self._adj[a].get(b, 0)

    def brightness_sub(self, i: int) -> dict[int, int]:
        """Member pixel count per gray level of set ``i``."""
        return {g: len(px) for g, px in sorted(self._members[i].items())}

    def members(self, i: int, gray: int | None = None) -> list[int]:
        sub = self._members[i]
        if gray is not None:
            return sorted(sub.get(gray, ()))
        return sorted(p for px in sub.values() for p in px)

    # -- energy ------------------------------------------------------------------

    def _add_energy(self, delta: float) -> None:
        # Neumaier compensated summation keeps long move sequences exact to
        # within a few ulps of the largest term.
        total = self._energy + delta
        if abs(self._energy) >= abs(delta):
            self._energy_comp += (self._energy - total) + delta
        else:
            self._energy_comp += (delta - total) + self._energy
        self._energy = total

    # -- adjacency bookkeeping ---------------------------------------------------

    def _adj_inc(self, a: int, b: int) -> None:
        row = self._adj[a]
        row[b] = row.get(b, 0) + 1
        row = self._adj[b]
        row[a] = row.get(a, 0) + 1

    def _adj_dec(self, a: int, b: int) -> None:
        row = self._adj[a]
        c = row[b] - 1
        if c:
            row[b] = c
            self._adj[b][a] = c
        else:
            del row[b]
            del self._adj[b][a]

    # -- connectivity --------------------------------------------------------------

    def _is_connected(self, i: int, removed: Iterable[int]) -> bool:
        """Whether set ``i`` minus ``removed`` pixels is one connected region."""
        removed = set(removed)
        remaining = self._n[i] - len(removed)
        if remaining <= 1:
            return True
        lab, nbrs = self._lab, self._nbrs
        start = next(p for px in self._members[i].values() for p in px if p not in removed)
        seen = {start}
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for q in nbrs[p]:
                if q not in seen and lab[q] == i and q not in removed:
                    seen.add(q)
                    queue.append(q)
        return len(seen) == remaining

    def _joins_connected(self, i: int, added: Sequence[int]) -> bool:
        """Whether set ``i`` plus ``added`` pixels is one connected region."""
        added_set = set(added)
        target = self._n[i] + len(added_set)
        lab, nbrs = self._lab, self._nbrs
        start = added[0]
        seen = {start}
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for q in nbrs[p]:
                if q not in seen and (lab[q] == i or q in added_set):
                    seen.add(q)
                    queue.append(q)
        return len(seen) == target

    def _donor_keeps_connected(self, donor: int, pixels: Sequence[int]) -> bool:
        if len(pixels) == 1:
            p = pixels[0]
            lab = self._lab
            if sum(1 for q in self._nbrs[p] if lab[q] == donor) <= 1:
                return True
        return self._is_connected(donor, pixels)

    def admissible_pixels(self, donor: int, recipient: int, gray: int) -> tuple[int, ...] | None:
        """Pixels a correction of ``gray`` from ``donor`` to ``recipient`` would move.

        Returns ``None`` when no admissible subset exists under the current
        mode and subset policy.
        """
        group = self._members[donor].get(gray)
        if not group:
            return None
        if self.subset is SubsetPolicy.CLASS:
            pixels = tuple(sorted(group))
            if len(pixels) >= self._n[donor]:
                return None
            if self.mode is Mode.RELAXED:
                return pixels
            if self._donor_keeps_connected(donor, pixels) and self._joins_connected(recipient, pixels):
                return pixels
            return None
        if self._n[donor] < 2:
            return None
        if self.mode is Mode.RELAXED:
            return (min(group),)
        lab, nbrs = self._lab, self._nbrs
        for p in sorted(group):
            if any(lab[q] == recipient for q in nbrs[p]) and self._donor_keeps_connected(donor, (p,)):
                return (p,)
        return None

    # -- mutation ------------------------------------------------------------------

    def merge(self, a: int, b: int) -> float:
        """Merge adjacent sets ``a`` and ``b``; returns the applied error increase.

        The larger set (the smaller id on a tie) keeps its id.
        """
        if a == b or b not in self._adj.get(a, {}):
            raise DomainError(f"sets {a} and {b} are not adjacent")
        if (self._n[b], -b) > (self._n[a], -a):
            a, b = b, a
        delta = _merge_increment(self._n[a], self._s[a], self._n[b], self._s[b])
        lab = self._lab
        dest = self._members[a]
        for g, px in self._members.pop(b).items():
            for p in px:
                lab[p] = a
            if g in dest:
                dest[g] |= px
            else:
                dest[g] = px
        self._n[a] += self._n.pop(b)
        self._s[a] += self._s.pop(b)
        row_b = self._adj.pop(b)
        self._boundary -= row_b.pop(a)
        del self._adj[a][b]
        row_a = self._adj[a]
        for c, cnt in row_b.items():
            other = self._adj[c]
            del other[b]
            row_a[c] = row_a.get(c, 0) + cnt
            other[a] = row_a[c]
        self._add_energy(delta)
        self._push_edges(a)
        return delta

    def move(self, donor: int, recipient: int, pixels: Sequence[int]) -> float:
        """Reclassify ``pixels`` from ``donor`` into ``recipient``.

        Admissibility is the caller's responsibility; see
        :meth:`admissible_pixels`. Returns the applied error change.
        """
        k = len(pixels)
        if k >= self._n[donor]:
            raise DomainError("a correction must leave the donor non-empty")
        sk = sum(self._pix[p] for p in pixels)
        delta = _correct_increment(self._n[donor], self._s[donor], self._n[recipient], self._s[recipient], k, sk)
        lab, pix, nbrs = self._lab, self._pix, self._nbrs
        src, dst = self._members[donor], self._members[recipient]
        for p in pixels:
            if lab[p] != donor:
                raise DomainError(f"pixel {p} is not in set {donor}")
            g = pix[p]
            group = src[g]
            group.remove(p)
            if not group:
                del src[g]
            dst.setdefault(g, set()).add(p)
            for q in nbrs[p]:
                other = lab[q]
                if other != donor:
                    self._adj_dec(donor, other)
                    self._boundary -= 1
                if other != recipient:
                    self._adj_inc(recipient, other)
                    self._boundary += 1
            lab[p] = recipient
        self._n[donor] -= k
        self._s[donor] -= sk
        self._n[recipient] += k
        self._s[recipient] += sk
        self._add_energy(delta)
        self._push_edges(donor)
        self._push_edges(recipient)
        return delta

    # -- merge ordering ------------------------------------------------------------

    def merge_key(self, a: int, b: int, boundary_term: bool = False) -> float:
        """Merge priority of an adjacent pair; lower merges first."""
        delta = _merge_increment(self._n[a], self._s[a], self._n[b], self._s[b])
        if boundary_term:
            return delta / self._adj[a][b]
        return delta

    def _push_edges(self, a: int) -> None:
        heap = self._heap
        if heap is None:
            return
        flsa = self._heap_flsa
        for b in self._adj[a]:
            lo, hi = (a, b) if a < b else (b, a)
            heapq.heappush(heap, (self.merge_key(a, b, flsa), lo, hi))

    def _ensure_heap(self, boundary_term: bool) -> list:
        if self._heap is None or self._heap_flsa != boundary_term:
            self._heap_flsa = boundary_term
            self._heap = [
                (self.merge_key(a, b, boundary_term), a, b)
                for a, row in self._adj.items()
                for b in row
                if a < b
            ]
            heapq.heapify(self._heap)
        return self._heap

    def pop_min_pair(self, boundary_term: bool = False) -> tuple[int, int]:
        """The adjacent pair with the smallest merge key (ties: smallest ids)."""
        heap = self._ensure_heap(boundary_term)
        while heap:
            key, a, b = heap[0]
            if a in self._adj and b in self._adj[a] and self.merge_key(a, b, boundary_term) == key:
                return a, b
            heapq.heappop(heap)
        raise InternalError("no adjacent pair of sets left to merge")

    def drop_merge_queue(self) -> None:
        self._heap = None


# ---------------------------------------------------------------------------
# operations


def merge_step(
    p: PixelPartition,
    scheduling: Scheduling | str = Scheduling.ABSORB,
    boundary_term: bool = False,
    limit: int | None = None,
) -> list[tuple[int, int, float]]:
    """Merge adjacent sets; returns ``(a, b, delta_e)`` for every merge applied.

    ``EXACT`` merges the single pair with the smallest key. ``ABSORB`` pairs
    every set with its best neighbour and merges all mutually-best pairs at
    once, lowest key first, at most ``limit`` of them. Keys order by
    ``(key, smaller id, larger id)``, so the globally best pair is always
    mutually best and ``ABSORB`` with ``limit=1`` equals ``EXACT``.

    With ``boundary_term`` the key is the error increase per unit of shared
    boundary instead of the bare error increase.
    """
    if p.n_sets < 2:
        raise DomainError("need at least two sets to merge")
    scheduling = Scheduling(scheduling)
    if scheduling is Scheduling.EXACT or limit == 1:
        a, b = p.pop_min_pair(boundary_term)
        return [(a, b, p.merge(a, b))]
    p.drop_merge_queue()
    best: dict[int, tuple[float, int, int]] = {}
    for a in p.set_ids():
        row = p._adj[a]
        if not row:
            continue
        best[a] = min(
            (p.merge_key(a, b, boundary_term), min(a, b), max(a, b)) for b in row
        )
    pairs = sorted(
        key for a, key in best.items() if key[1] == a and best.get(key[2]) == key
    )
    if not pairs:
        raise InternalError("no adjacent pair of sets left to merge")
    if limit is not None:
        pairs = pairs[:limit]
    return [(a, b, p.merge(a, b)) for _, a, b in pairs]


def _candidate_moves(p: PixelPartition, donor: int, gray: int, recipients: Iterable[int]) -> list[tuple[float, int, int]]:
    """Error-lowering recipients for one subset, best first, as ``(dE, recipient, k)``."""
    group = p._members[donor].get(gray)
    if not group:
        return []
    n1, s1 = p._n[donor], p._s[donor]
    k = len(group) if p.subset is SubsetPolicy.CLASS else 1
    if k >= n1:
        return []
    sk = gray * k
    out = []
    for r in recipients:
        n2, s2 = p._n[r], p._s[r]
        num, den, _ = _correct_parts(n1, s1, n2, s2, k, sk)
        if num < 0:
            out.append((num / den, r, k))
    out.sort()
    return out


def _first_admissible(p: PixelPartition, donor: int, gray: int, recipients: Iterable[int]) -> Move | None:
    for de, r, k in _candidate_moves(p, donor, gray, recipients):
        pixels = p.admissible_pixels(donor, r, gray)
        if pixels is not None:
            n1, n2 = p._n[donor], p._n[r]
            return Move(donor, r, gray, pixels, MoveDelta("correct", k, float(gray), de, alpha(n1, n2, k)))
    return None


def _improve_donor(p: PixelPartition, donor: int) -> set[int]:
    """Apply the best error-lowering correction for each gray level of ``donor``.

    Returns the ids whose candidate moves may have changed.
    """
    touched: set[int] = set()
    for gray in sorted(p._members[donor]):
        while True:
            if donor not in p._n:
                return touched
            move = _first_admissible(p, donor, gray, sorted(p._adj[donor]))
            if move is None:
                break
            p.move(donor, move.recipient, move.pixels)
            touched.update((donor, move.recipient))
            touched.update(p._adj[donor])
            touched.update(p._adj[move.recipient])
            if p.subset is SubsetPolicy.CLASS:
                break
    return touched


def correction_pass(p: PixelPartition) -> bool:
    """One sweep of corrections over all sets in ascending id order.

    Each set is the donor for every gray level it holds; the recipient is the
    adjacent set giving the largest error drop. Moves with zero change are
    never applied. Returns whether any move was applied.
    """
    improved = False
    for donor in p.set_ids():
        if _improve_donor(p, donor):
            improved = True
    return improved


def correct_until_stable(p: PixelPartition, seeds: Iterable[int] | None = None) -> int:
    """Apply corrections until the partition is stable; returns the move count.

    Only sets whose neighbourhood changed are revisited. ``seeds`` restricts
    the initial work list (all sets by default) and must include every set
    whose candidate moves may have changed since the partition was last
    stable.
    """
    queue = sorted(set(p._n) if seeds is None else {s for s in seeds if s in p._n})
    queued = set(queue)
    heapq.heapify(queue)
    moves = 0
    while queue:
        donor = heapq.heappop(queue)
        queued.discard(donor)
        if donor not in p._n:
            continue
        before = p.energy
        touched = _improve_donor(p, donor)
        if touched:
            moves += 1
            if not p.energy < before:
                raise InternalError("correction failed to lower the error")
        for t in touched:
            if t not in queued and t in p._n:
                queued.add(t)
                heapq.heappush(queue, t)
    return moves


def _best_move(p: PixelPartition, donors: Iterable[int]) -> Move | None:
    best: Move | None = None
    for donor in sorted(donors):
        if donor not in p._n:
            continue
        recipients = sorted(p._adj[donor])
        for gray in sorted(p._members[donor]):
            move = _first_admissible(p, donor, gray, recipients)
            if move is not None and (best is None or move.delta.delta_e < best.delta.delta_e):
                best = move
    return best


def correct_by_priority(p: PixelPartition) -> int:
    """Stabilise by always applying the single most error-lowering move.

    An alternative to :func:`correct_until_stable` whose fixed scan order is
    replaced by a global choice; slower, since every step rescans all sets.
    Returns the move count.
    """
    moves = 0
    while True:
        move = _best_move(p, p._n)
        if move is None:
            return moves
        before = p.energy
        p.move(move.donor, move.recipient, move.pixels)
        if not p.energy < before:
            raise InternalError("correction failed to lower the error")
        moves += 1


def find_violation(p: PixelPartition, all_pairs: bool = False) -> Move | None:
    """First admissible error-lowering correction, or ``None`` if stable.

    Donors, gray levels and recipients are scanned in ascending order. With
    ``all_pairs`` recipients range over every other set, not only adjacent
    ones; this is a strictly stronger test in relaxed mode.
    """
    ids = p.set_ids()
    for donor in ids:
        recipients = [r for r in ids if r != donor] if all_pairs else sorted(p._adj[donor])
        for gray in sorted(p._members[donor]):
            for de, r, k in _candidate_moves(p, donor, gray, recipients):
                if all_pairs and p.mode is Mode.RELAXED:
                    group = p._members[donor][gray]
                    pixels = tuple(sorted(group)) if p.subset is SubsetPolicy.CLASS else (min(group),)
                elif r not in p._adj[donor]:
                    continue
                else:
                    pixels = p.admissible_pixels(donor, r, gray)
                if pixels is not None:
                    n1, n2 = p._n[donor], p._n[r]
                    return Move(donor, r, gray, pixels, MoveDelta("correct", k, float(gray), de, alpha(n1, n2, k)))
    return None


def is_stable(p: PixelPartition, all_pairs: bool = False) -> bool:
    """Whether no admissible correction lowers the error."""
    return find_violation(p, all_pairs) is None


def full_sse_rescan(p: PixelPartition) -> float:
    """Squared error recomputed from labels and pixels alone."""
    n: dict[int, int] = {}
    sums: dict[int, int] = {}
    sq: dict[int, int] = {}
    for lab, g in zip(p._lab, p._pix):
        n[lab] = n.get(lab, 0) + 1
        sums[lab] = sums.get(lab, 0) + g
        sq[lab] = sq.get(lab, 0) + g * g
    return math.fsum((n[i] * sq[i] - sums[i] * sums[i]) / n[i] for i in n)
