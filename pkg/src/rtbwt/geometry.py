"""Distances, greedy nearest-neighbor path ordering and permutation algebra.

Indices are 0-based throughout the Python API. The CSV exchange formats in
:mod:`rtbwt.io` use 1-based indices.
"""
from __future__ import annotations

import contextlib
import contextvars
import enum
import threading
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numba
import numpy as np


class DistanceMetric(str, enum.Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    EUCLIDEAN = "euclidean"


class DistanceCounter:
    """Thread-safe tally of explicit distance evaluations."""

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._count += int(k)

    def merge(self, other: "DistanceCounter") -> None:
        self.add(other.count)

    @property
    def count(self) -> int:
        return self._count


_active_counter: contextvars.ContextVar[Optional[DistanceCounter]] = contextvars.ContextVar(
    "rtbwt_distance_counter", default=None
)


@contextlib.contextmanager
def counting(counter: Optional[DistanceCounter] = None) -> Iterator[DistanceCounter]:
    """Install ``counter`` (or a fresh one) for every distance computed in the block.

    On exit the block's tally is merged into any enclosing counter.
    """
    counter = DistanceCounter() if counter is None else counter
    outer = _active_counter.get()
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)
        if outer is not None and outer is not counter:
            outer.merge(counter)


def _tally(k: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.add(k)


@dataclass(frozen=True)
class FeaturePoint:
    coords: np.ndarray
    anchor: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class PointSet:
    """An immutable ordered set of ``m`` feature points.

    ``coords`` has shape ``(m, dim)``; ``anchors`` is either ``None`` or an
    integer array of shape ``(m, 2)`` holding (row, col) pixel positions.
    """

    coords: np.ndarray
    anchors: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1:
            raise ValueError(f"PointSet needs a non-empty (m, dim) array, got shape {coords.shape}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.anchors is not None:
            anchors = np.array(self.anchors, dtype=np.int64)
            if anchors.shape != (coords.shape[0], 2):
                raise ValueError(
                    f"anchors must have shape ({coords.shape[0]}, 2), got {anchors.shape}"
                )
            anchors.setflags(write=False)
            object.__setattr__(self, "anchors", anchors)

    @classmethod
    def from_points(cls, points: Sequence[FeaturePoint]) -> "PointSet":
        if not points:
            raise ValueError("empty point set")
        has_anchor = [p.anchor is not None for p in points]
        if any(has_anchor) and not all(has_anchor):
            raise ValueError("anchor must be present on every point or on none")
        dims = {np.atleast_1d(p.coords).shape for p in points}
        if len(dims) != 1:
            raise ValueError(f"points have mismatched dimensions: {sorted(dims)}")
        coords = np.stack([np.atleast_1d(np.asarray(p.coords, dtype=np.float64)) for p in points])
        anchors = np.array([p.anchor for p in points]) if all(has_anchor) else None
        return cls(coords, anchors)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __getitem__(self, i: int) -> FeaturePoint:
        anchor = None if self.anchors is None else (int(self.anchors[i, 0]), int(self.anchors[i, 1]))
        return FeaturePoint(self.coords[i], anchor)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def take(self, order: np.ndarray) -> "PointSet":
        anchors = None if self.anchors is None else self.anchors[order]
        return PointSet(self.coords[order], anchors)


@dataclass(frozen=True)
class Permutation:
    """A reordering: ``apply(v)[j] == v[order[j]]``."""

    order: np.ndarray = field()

    def __post_init__(self) -> None:
        order = np.array(self.order, dtype=np.int64).reshape(-1)
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise ValueError("order is not a bijection of 0..m-1")
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, m: int) -> "Permutation":
        return cls(np.arange(m))

    def __len__(self) -> int:
        return self.order.size

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.order, other.order)

    def __hash__(self) -> int:
        return hash(self.order.tobytes())

    def inverse(self) -> "Permutation":
        return invert_permutation(self)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply_permutation(v, self)


def apply_permutation(v, perm: Permutation) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != len(perm):
        raise ValueError(f"length mismatch: vector {v.shape[0]} vs permutation {len(perm)}")
    return v[perm.order]


def invert_permutation(perm: Permutation) -> Permutation:
    inv = np.empty_like(perm.order)
    inv[perm.order] = np.arange(perm.order.size)
    return Permutation(inv)


def _pairwise(x: np.ndarray, ys: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    # distances from one point to many; counted once per candidate
    diff = ys - x
    d = np.einsum("ij,ij->i", diff, diff)
    _tally(d.shape[0])
    if metric == DistanceMetric.EUCLIDEAN:
        return np.sqrt(d)
    return d


def distance(p, q, metric: DistanceMetric | str = DistanceMetric.SQUARED_EUCLIDEAN) -> float:
    metric = DistanceMetric(metric)
    p = np.atleast_1d(np.asarray(getattr(p, "coords", p), dtype=np.float64))
    q = np.atleast_1d(np.asarray(getattr(q, "coords", q), dtype=np.float64))
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(_pairwise(p, q[None, :], metric)[0])


@numba.njit(cache=True)
def _sqdist(X, a, b):
    acc = 0.0
    for t in range(X.shape[1]):
        diff = X[a, t] - X[b, t]
        acc += diff * diff
    return acc


@numba.njit(cache=True)
def _greedy_path(X, anchors, radius, start, cell_start, cell_members, cell_origin, cell_shape):
    # radius < 0 disables the window; returns (order, number of distances evaluated)
    m = X.shape[0]
    order = np.empty(m, dtype=np.int64)
    visited = np.zeros(m, dtype=np.bool_)
    side = radius + 1
    cur = start
    visited[cur] = True
    order[0] = cur
    first_free = 0
    count = 0
    for step in range(1, m):
        best = -1
        best_d = np.inf
        if radius >= 0:
            r = anchors[cur, 0]
            c = anchors[cur, 1]
            i0 = max((r - radius) // side - cell_origin[0], 0)
            i1 = min((r + radius) // side - cell_origin[0], cell_shape[0] - 1)
            j0 = max((c - radius) // side - cell_origin[1], 0)
            j1 = min((c + radius) // side - cell_origin[1], cell_shape[1] - 1)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    key = i * cell_shape[1] + j
                    for t in range(cell_start[key], cell_start[key + 1]):
                        q = cell_members[t]
                        if visited[q]:
                            continue
                        if abs(anchors[q, 0] - r) > radius or abs(anchors[q, 1] - c) > radius:
                            continue
                        d = _sqdist(X, cur, q)
                        count += 1
                        if d < best_d or (d == best_d and q < best):
                            best_d = d
                            best = q
        if best < 0:
            while visited[first_free]:
                first_free += 1
            for q in range(first_free, m):
                if visited[q]:
                    continue
                d = _sqdist(X, cur, q)
                count += 1
                if d < best_d:
                    best_d = d
                    best = q
        cur = best
        visited[cur] = True
        order[step] = cur
    return order, count


def _cell_index(anchors: np.ndarray, radius: int):
    """Bucket anchors into square cells of side ``radius + 1`` (CSR layout)."""
    side = radius + 1
    cells = anchors // side
    origin = cells.min(axis=0)
    cells = cells - origin
    shape = cells.max(axis=0) + 1
    flat = cells[:, 0] * shape[1] + cells[:, 1]
    members = np.argsort(flat, kind="stable").astype(np.int64)
    starts = np.searchsorted(flat[members], np.arange(shape[0] * shape[1] + 1)).astype(np.int64)
    return starts, members, origin.astype(np.int64), shape.astype(np.int64)


def nn_path(
    points: PointSet,
    start: int = 0,
    metric: DistanceMetric | str = DistanceMetric.SQUARED_EUCLIDEAN,
    window: Optional[int] = None,
) -> Permutation:
    """Greedy nearest-neighbor ordering of ``points`` beginning at ``start``.

    Ties go to the lowest index. With ``window=B`` only unvisited points whose
    anchors lie within Chebyshev radius ``B // 2`` of the current anchor are
    candidates; if none remain there the global nearest unvisited point is
    taken instead. Euclidean and squared Euclidean distances rank candidates
    identically, so both metrics share one search.
    """
    DistanceMetric(metric)
    m = len(points)
    if not 0 <= start < m:
        raise ValueError(f"start index {start} outside 0..{m - 1}")
    if window is not None:
        if points.anchors is None:
            raise ValueError("windowed search requires anchors on every point")
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        radius = window // 2
        anchors = np.ascontiguousarray(points.anchors, dtype=np.int64)
        cells = _cell_index(anchors, radius)
    else:
        radius = -1
        anchors = np.zeros((m, 2), dtype=np.int64)
        cells = (np.zeros(2, np.int64), np.zeros(0, np.int64), np.zeros(2, np.int64), np.ones(2, np.int64))
    X = np.ascontiguousarray(points.coords)
    order, count = _greedy_path(X, anchors, radius, start, *cells)
    _tally(count)
    return Permutation(order)


def path_cost(
    points: PointSet, perm: Permutation, metric: DistanceMetric | str = DistanceMetric.EUCLIDEAN
) -> float:
    metric = DistanceMetric(metric)
    if len(perm) != len(points):
        raise ValueError(f"length mismatch: {len(points)} points vs permutation {len(perm)}")
    Y = points.coords[perm.order]
    d = np.einsum("ij,ij->i", np.diff(Y, axis=0), np.diff(Y, axis=0))
    if metric == DistanceMetric.EUCLIDEAN:
        d = np.sqrt(d)
    return float(d.sum())


def total_variation(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.size < 1:
        raise ValueError("total variation of an empty vector")
    return float(np.abs(np.diff(v)).sum())


@dataclass(frozen=True)
class SmoothnessReport:
    tv: float
    path_cost: float
    lipschitz_K: float
    bound_holds: bool


def smoothness_report(
    points: PointSet,
    signal,
    perm: Permutation,
    K: float,
    metric: DistanceMetric | str = DistanceMetric.EUCLIDEAN,
) -> SmoothnessReport:
    """Total variation of the reordered signal against ``K`` times the path length.

    The comparison is only a guaranteed bound for the Euclidean metric and a
    ``K``-Lipschitz signal. A relative slack of 1e-12 absorbs rounding in the
    equality case.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] != len(points) or len(perm) != len(points):
        raise ValueError(
            f"length mismatch: {len(points)} points, signal {signal.shape[0]}, permutation {len(perm)}"
        )
    tv = total_variation(apply_permutation(signal, perm))
    cost = path_cost(points, perm, metric)
    return SmoothnessReport(tv=tv, path_cost=cost, lipschitz_K=float(K), bound_holds=bool(tv <= K * cost * (1.0 + 1e-12)))
