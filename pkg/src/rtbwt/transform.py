"""Redundant tree-based wavelet transform: operator construction, decomposition, reconstruction.

Stages are numbered ``k = 0 .. D-1`` from the finest; stage ``k`` corresponds to
decomposition level ``L - k`` with ``L = log2(N) + 1``. Stage ``k`` holds
``2**k`` bands of length ``N / 2**k``. Bands are stored as arrays of shape
``(..., bands, m)``; splitting band ``s`` sends its odd samples (1st, 3rd, ...)
to band ``s`` and its even samples to band ``s + bands`` of the next stage, so
band ``s`` of ``t`` starts at sample ``s`` and keeps every ``t``-th one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filters import WaveletFilterPair, make_filter, periodic_convolve, synthesis_step
from .geometry import DistanceMetric, Permutation, PointSet, counting, nn_path


def max_depth(n: int) -> int:
    """Largest ``D`` with ``2**D`` dividing ``n``."""
    if n < 1:
        raise ValueError(f"signal length must be positive, got {n}")
    d = 0
    while n % 2 == 0:
        n //= 2
        d += 1
    return d


def check_depth(n: int, depth: int) -> None:
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if n % (2 ** depth):
        raise ValueError(
            f"length {n} is not divisible by 2**{depth}; max feasible depth is {max_depth(n)}"
        )


def _split(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x[..., 0::2], x[..., 1::2]], axis=-2)


def _take(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(x, np.broadcast_to(idx, x.shape), axis=-1)


@dataclass(frozen=True)
class OperatorSet:
    """Permutations for every band of every stage, plus the feature points they came from.

    ``perms[k]`` has shape ``(2**k, N // 2**k)``. ``coords[k]`` (and ``anchors[k]``)
    hold the band feature points of stage ``k`` in band order, before permutation;
    index ``D`` holds the features of the final approximation bands. The feature
    lists are empty when the set was built with ``keep_points=False``.
    """

    n: int
    depth: int
    filter_name: str
    perms: list[np.ndarray]
    coords: list[np.ndarray] = field(default_factory=list)
    anchors: list[Optional[np.ndarray]] = field(default_factory=list)
    distance_count: int = 0

    def __post_init__(self) -> None:
        check_depth(self.n, self.depth)
        if len(self.perms) != self.depth:
            raise ValueError(f"expected {self.depth} permutation stages, got {len(self.perms)}")
        inverses = []
        for k, p in enumerate(self.perms):
            shape = (2 ** k, self.n // 2 ** k)
            if p.shape != shape:
                raise ValueError(f"stage {k} permutations have shape {p.shape}, expected {shape}")
            if not np.array_equal(np.sort(p, axis=-1), np.broadcast_to(np.arange(shape[1]), shape)):
                raise ValueError(f"stage {k} holds an invalid permutation")
            inv = np.empty_like(p)
            np.put_along_axis(inv, p, np.broadcast_to(np.arange(shape[1]), shape), axis=-1)
            inverses.append(inv)
        object.__setattr__(self, "_inverses", inverses)

    @classmethod
    def from_permutations(
        cls, n: int, depth: int, perms: list[np.ndarray], filter_name: str = "haar"
    ) -> "OperatorSet":
        return cls(n, depth, filter_name, [np.asarray(p, dtype=np.int64) for p in perms])

    @classmethod
    def identity(cls, n: int, depth: int, filter_name: str = "haar") -> "OperatorSet":
        check_depth(n, depth)
        perms = [np.tile(np.arange(n // 2 ** k), (2 ** k, 1)) for k in range(depth)]
        return cls(n, depth, filter_name, perms)

    @classmethod
    def random(cls, n: int, depth: int, rng: np.random.Generator, filter_name: str = "haar") -> "OperatorSet":
        check_depth(n, depth)
        perms = [rng.permuted(np.tile(np.arange(n // 2 ** k), (2 ** k, 1)), axis=1) for k in range(depth)]
        return cls(n, depth, filter_name, perms)

    @property
    def inverse_perms(self) -> list[np.ndarray]:
        return self._inverses

    def n_bands(self, stage: int) -> int:
        return 2 ** stage

    def band_length(self, stage: int) -> int:
        return self.n // 2 ** stage

    def level(self, stage: int) -> int:
        """Decomposition level index (finest level is ``log2(N) + 1``)."""
        return int(np.log2(self.n)) + 1 - stage

    def permutation(self, stage: int, band: int) -> Permutation:
        return Permutation(self.perms[stage][band])

    def band_points(self, stage: int, band: int) -> PointSet:
        if not self.coords:
            raise ValueError("feature points were not retained (built with keep_points=False)")
        anchors = self.anchors[stage]
        return PointSet(self.coords[stage][band], None if anchors is None else anchors[band])


def _weighted_mean(x: np.ndarray, f: WaveletFilterPair) -> np.ndarray:
    # x: (..., m, dim) -> lowpass along m with weights normalized to sum 1
    w = f.analysis_low / f.analysis_low.sum()
    return periodic_convolve(x, w, axis=-2)


def propagate_features(points: PointSet, perm: Permutation, f: WaveletFilterPair) -> PointSet:
    """Weighted means of reordered points, one per position of the undecimated lowpass output.

    Anchors are averaged with the same weights and rounded to the nearest pixel.
    """
    if len(perm) != len(points):
        raise ValueError(f"length mismatch: {len(points)} points vs permutation {len(perm)}")
    coords = _weighted_mean(points.coords[perm.order], f)
    anchors = None
    if points.anchors is not None:
        anchors = np.rint(_weighted_mean(points.anchors[perm.order].astype(np.float64), f)).astype(np.int64)
    return PointSet(coords, anchors)


def build_operators(
    points: PointSet,
    depth: int,
    f: WaveletFilterPair,
    metric: DistanceMetric | str = DistanceMetric.SQUARED_EUCLIDEAN,
    window: Optional[int] = None,
    start_rule: str = "first",
    seed: Optional[int] = None,
    keep_points: bool = True,
) -> OperatorSet:
    """Derive every band permutation by greedy path ordering of propagated features.

    ``start_rule`` is ``"first"`` (each path starts at the band's first point) or
    ``"random"`` (a start drawn per band from ``seed``).
    """
    n = len(points)
    check_depth(n, depth)
    if start_rule not in ("first", "random"):
        raise ValueError(f"start_rule must be 'first' or 'random', got {start_rule!r}")
    rng = np.random.default_rng(seed)
    coords = points.coords[None]
    anchors = None if points.anchors is None else points.anchors[None]
    perms, kept_coords, kept_anchors = [], [], []
    with counting() as counter:
        for k in range(depth):
            bands, m = coords.shape[0], coords.shape[1]
            if keep_points:
                kept_coords.append(coords)
                kept_anchors.append(anchors)
            stage = np.empty((bands, m), dtype=np.int64)
            for b in range(bands):
                start = 0 if start_rule == "first" else int(rng.integers(m))
                band = PointSet(coords[b], None if anchors is None else anchors[b])
                stage[b] = nn_path(band, start, metric, window).order
            perms.append(stage)
            coords = _split_points(_weighted_mean(_take_rows(coords, stage), f))
            if anchors is not None:
                moved = _weighted_mean(_take_rows(anchors, stage).astype(np.float64), f)
                anchors = _split_points(np.rint(moved).astype(np.int64))
        if keep_points:
            kept_coords.append(coords)
            kept_anchors.append(anchors)
    return OperatorSet(n, depth, f.name, perms, kept_coords, kept_anchors, counter.count)


def _take_rows(x: np.ndarray, perms: np.ndarray) -> np.ndarray:
    # x: (bands, m, dim), perms: (bands, m)
    return np.take_along_axis(x, perms[..., None], axis=1)


def _split_points(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x[:, 0::2], x[:, 1::2]], axis=0)


@dataclass(frozen=True)
class CoefficientPyramid:
    """Coefficients of a depth-``D`` decomposition, batched over leading axes.

    ``details[k]`` is the concatenation of stage ``k``'s detail bands and
    ``approx`` that of the final approximation bands; each has shape ``(..., N)``.
    """

    details: list[np.ndarray]
    approx: np.ndarray
    n: int
    depth: int
    filter_name: str

    @property
    def n_coefficients(self) -> int:
        return (self.depth + 1) * self.n

    def stage_matrices(self) -> list[np.ndarray]:
        return [*self.details, self.approx]

    def with_stages(self, mats: list[np.ndarray]) -> "CoefficientPyramid":
        if len(mats) != self.depth + 1:
            raise ValueError(f"expected {self.depth + 1} coefficient arrays, got {len(mats)}")
        return CoefficientPyramid(list(mats[:-1]), mats[-1], self.n, self.depth, self.filter_name)

    def band(self, stage: int, band: int) -> np.ndarray:
        """Detail band ``band`` of ``stage``; ``stage == depth`` addresses the approximation."""
        m = self.n // 2 ** min(stage, self.depth)
        src = self.approx if stage == self.depth else self.details[stage]
        return src[..., band * m:(band + 1) * m]


def decompose(signal, ops: OperatorSet, f: Optional[WaveletFilterPair] = None) -> CoefficientPyramid:
    """Forward transform of ``signal`` (shape ``(..., N)``) with the stored permutations."""
    f = make_filter(ops.filter_name) if f is None else f
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[-1] != ops.n:
        raise ValueError(f"signal length {x.shape[-1]} does not match operator set size {ops.n}")
    lead = x.shape[:-1]
    x = x[..., None, :]
    details = []
    for k in range(ops.depth):
        x = _take(x, ops.perms[k])
        low = periodic_convolve(x, f.analysis_low)
        details.append(periodic_convolve(x, f.analysis_high).reshape(lead + (ops.n,)))
        x = _split(low)
    return CoefficientPyramid(details, x.reshape(lead + (ops.n,)), ops.n, ops.depth, f.name)


def reconstruct(pyr: CoefficientPyramid, ops: OperatorSet, f: Optional[WaveletFilterPair] = None) -> np.ndarray:
    f = make_filter(ops.filter_name) if f is None else f
    if pyr.n != ops.n or pyr.depth != ops.depth:
        raise ValueError(
            f"pyramid (N={pyr.n}, D={pyr.depth}) does not match operators (N={ops.n}, D={ops.depth})"
        )
    lead = pyr.approx.shape[:-1]
    bands = 2 ** ops.depth
    x = pyr.approx.reshape(lead + (bands, ops.n // bands))
    for k in reversed(range(ops.depth)):
        bands = 2 ** k
        m = ops.n // bands
        detail = pyr.details[k]
        if detail.shape != lead + (ops.n,):
            raise ValueError(f"stage {k} detail has shape {detail.shape}, expected {lead + (ops.n,)}")
        y = synthesis_step(x[..., :bands, :], x[..., bands:, :], detail.reshape(lead + (bands, m)), f)
        x = _take(y, ops.inverse_perms[k])
    return x.reshape(lead + (ops.n,))


def combinatorial_count(n: int, depth: int) -> int:
    """Distances an unwindowed build evaluates: each band of ``m`` points costs ``m(m-1)/2``."""
    check_depth(n, depth)
    return sum(2 ** k * (n // 2 ** k) * (n // 2 ** k - 1) // 2 for k in range(depth))


def closed_form_counts(n: int, levels: int) -> tuple[float, float, float]:
    """Closed-form distance counts for a full redundant decomposition and for the
    multi-tree orthonormal alternative of similar redundancy, and their ratio."""
    if n < 2:
        raise ValueError(f"N must be >= 2, got {n}")
    # integer numerators keep the division exact whenever the result is integral
    rtbwt = (2 * n * n - 4 * n - n * (levels - 1) + 2) / 2
    gtbwt = levels * (2 * n * n - 3 * n - 3 * levels + 4) / 3
    return rtbwt, gtbwt, gtbwt / rtbwt
