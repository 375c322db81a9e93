"""Patch-based image denoising with a shared-operator redundant tree wavelet transform.

Images are 2-D float arrays, nominal range [0, 255]. Pixels are ordered
row-major wherever an image is flattened into a signal.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .filters import FILTER_NAMES, make_filter
from .geometry import DistanceMetric, PointSet
from .transform import CoefficientPyramid, OperatorSet, build_operators, check_depth, decompose, reconstruct

log = logging.getLogger(__name__)

# Selected by calibrate_threshold_factor on tests/data/camera_calib_64.pgm, sigma=25, defaults.
AUTO_THRESHOLD_FACTOR = 1.5

THRESHOLD_SCOPES = ("all_matrices", "details_only")
THRESHOLD_MODES = ("column", "coefficient")


@dataclass(frozen=True)
class DenoiseConfig:
    patch_side: int = 8
    window: Optional[int] = 31
    depth: int = 9
    threshold: Union[float, str] = "auto"
    sigma: float = 0.0
    filter_name: str = "sym8"
    seed: int = 0
    threshold_scope: str = "all_matrices"
    threshold_mode: str = "column"
    start_rule: str = "first"
    threshold_factor: float = AUTO_THRESHOLD_FACTOR

    def __post_init__(self) -> None:
        if self.patch_side < 1:
            raise ValueError(f"patch_side must be >= 1, got {self.patch_side}")
        if self.window is not None and self.window < 1:
            raise ValueError(f"window must be >= 1 or None, got {self.window}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if isinstance(self.threshold, str):
            if self.threshold != "auto":
                raise ValueError(f"threshold must be a number or 'auto', got {self.threshold!r}")
        elif self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.filter_name not in FILTER_NAMES:
            raise ValueError(f"unknown filter {self.filter_name!r}")
        if self.threshold_scope not in THRESHOLD_SCOPES:
            raise ValueError(f"threshold_scope must be one of {THRESHOLD_SCOPES}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.start_rule not in ("first", "random"):
            raise ValueError("start_rule must be 'first' or 'random'")

    @property
    def n(self) -> int:
        return self.patch_side ** 2

    def resolve_threshold(self) -> float:
        if self.threshold == "auto":
            return self.threshold_factor * self.sigma * self.patch_side
        return float(self.threshold)


def add_awgn(img, sigma: float, seed: Optional[int] = None) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise; no clipping."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    return img + np.random.default_rng(seed).normal(0.0, sigma, img.shape)


def psnr(ref, test) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    mse = np.mean((ref - test) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def pad_widths(patch_side: int) -> tuple[int, int]:
    """(leading, trailing) padding; the patch of a pixel has ``leading`` rows above it."""
    extra = patch_side - 1
    return (extra + 1) // 2, extra // 2


def mirror_pad(img, patch_side: int) -> np.ndarray:
    """Mirror-reflect (edge sample not repeated) to ``(N1 + p - 1, N2 + p - 1)``."""
    img = np.asarray(img, dtype=np.float64)
    if patch_side < 1:
        raise ValueError(f"patch_side must be >= 1, got {patch_side}")
    if patch_side > 2 * min(img.shape):
        raise ValueError(f"patch side {patch_side} exceeds twice the image size {img.shape}")
    lead, trail = pad_widths(patch_side)
    if lead == 0 and trail == 0:
        return img.copy()
    if min(img.shape) < 2:
        return np.pad(img, ((lead, trail), (lead, trail)), mode="symmetric")
    return np.pad(img, ((lead, trail), (lead, trail)), mode="reflect")


@dataclass(frozen=True)
class PatchMatrix:
    """Column ``j`` holds the column-stacked patch of pixel ``j``; ``anchors[j]`` is
    that pixel's (row, col) in the padded frame."""

    data: np.ndarray
    anchors: np.ndarray
    patch_side: int
    shape: tuple[int, int]

    def point_set(self) -> PointSet:
        return PointSet(self.data.T, self.anchors)


def extract_patches(padded, patch_side: int, orig_shape: Sequence[int]) -> PatchMatrix:
    padded = np.asarray(padded, dtype=np.float64)
    n1, n2 = (int(s) for s in orig_shape)
    expect = (n1 + patch_side - 1, n2 + patch_side - 1)
    if padded.shape != expect:
        raise ValueError(f"padded shape {padded.shape} inconsistent with {orig_shape} and patch {patch_side}")
    p = patch_side
    data = np.empty((p * p, n1 * n2))
    for dj in range(p):
        for di in range(p):
            data[dj * p + di] = padded[di:di + n1, dj:dj + n2].ravel()
    lead, _ = pad_widths(p)
    rows, cols = np.divmod(np.arange(n1 * n2), n2)
    anchors = np.stack([rows + lead, cols + lead], axis=1)
    return PatchMatrix(data, anchors, p, (n1, n2))


def subimage_signals(pm: PatchMatrix) -> np.ndarray:
    """The ``n`` shifted subimages, one per row; row ``dj * p + di`` has its top-left
    pixel at offset ``(di, dj)`` of the padded frame."""
    return pm.data


def column_threshold(
    stage_matrices: Sequence[np.ndarray],
    T: float,
    scope: str = "all_matrices",
    mode: str = "column",
) -> list[np.ndarray]:
    """Zero each column whose Euclidean norm is below ``T``.

    With ``scope="details_only"`` the last (approximation) matrix is left alone.
    ``mode="coefficient"`` instead zeros single entries below ``T / sqrt(n)``.
    """
    if T < 0:
        raise ValueError(f"threshold must be >= 0, got {T}")
    if scope not in THRESHOLD_SCOPES:
        raise ValueError(f"scope must be one of {THRESHOLD_SCOPES}")
    out = []
    last = len(stage_matrices) - 1
    for k, mat in enumerate(stage_matrices):
        mat = np.asarray(mat, dtype=np.float64)
        if scope == "details_only" and k == last:
            out.append(mat.copy())
            continue
        if mode == "column":
            keep = np.sqrt(np.einsum("ij,ij->j", mat, mat)) >= T
            out.append(mat * keep[None, :])
        elif mode == "coefficient":
            out.append(np.where(np.abs(mat) >= T / math.sqrt(mat.shape[0]), mat, 0.0))
        else:
            raise ValueError(f"mode must be one of {THRESHOLD_MODES}")
    return out


def estimate_counts(shape: Sequence[int], patch_side: int) -> np.ndarray:
    """How many subimage estimates land on each original pixel."""
    n1, n2 = shape
    p = patch_side
    lead, _ = pad_widths(p)
    cnt = np.zeros((n1 + p - 1, n2 + p - 1))
    for di in range(p):
        for dj in range(p):
            cnt[di:di + n1, dj:dj + n2] += 1
    return cnt[lead:lead + n1, lead:lead + n2]


def _average_subimages(est: np.ndarray, shape: tuple[int, int], patch_side: int) -> np.ndarray:
    n1, n2 = shape
    p = patch_side
    lead, _ = pad_widths(p)
    acc = np.zeros((n1 + p - 1, n2 + p - 1))
    cnt = np.zeros_like(acc)
    for dj in range(p):
        for di in range(p):
            acc[di:di + n1, dj:dj + n2] += est[dj * p + di].reshape(n1, n2)
            cnt[di:di + n1, dj:dj + n2] += 1
    # padded border estimates are discarded
    return acc[lead:lead + n1, lead:lead + n2] / cnt[lead:lead + n1, lead:lead + n2]


@dataclass
class DenoiseResult:
    image: np.ndarray
    threshold: float
    threshold_factor: Optional[float]
    distance_count: int
    seconds: float
    operators: OperatorSet = field(repr=False)


@dataclass
class _Prepared:
    cfg: DenoiseConfig
    shape: tuple[int, int]
    operators: OperatorSet
    pyramid: CoefficientPyramid


def _prepare(noisy, cfg: DenoiseConfig) -> _Prepared:
    noisy = np.asarray(noisy, dtype=np.float64)
    if noisy.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {noisy.shape}")
    if not np.all(np.isfinite(noisy)):
        raise ValueError("image contains non-finite values")
    n_pix = noisy.size
    try:
        check_depth(n_pix, cfg.depth)
    except ValueError as exc:
        raise ValueError(f"{exc}; crop the image or lower the depth") from None
    f = make_filter(cfg.filter_name)
    padded = mirror_pad(noisy, cfg.patch_side)
    pm = extract_patches(padded, cfg.patch_side, noisy.shape)
    ops = build_operators(
        pm.point_set(),
        cfg.depth,
        f,
        DistanceMetric.SQUARED_EUCLIDEAN,
        window=cfg.window,
        start_rule=cfg.start_rule,
        seed=cfg.seed,
        keep_points=False,
    )
    log.info("built operators: %d distances", ops.distance_count)
    pyr = decompose(subimage_signals(pm), ops, f)
    return _Prepared(cfg, noisy.shape, ops, pyr)


def _finish(prep: _Prepared, T: float) -> np.ndarray:
    cfg = prep.cfg
    ops = prep.operators
    mats = column_threshold(prep.pyramid.stage_matrices(), T, cfg.threshold_scope, cfg.threshold_mode)
    est = reconstruct(prep.pyramid.with_stages(mats), ops, make_filter(cfg.filter_name))
    return _average_subimages(est, prep.shape, cfg.patch_side)


def run_denoise(noisy, cfg: DenoiseConfig) -> DenoiseResult:
    t0 = time.perf_counter()
    prep = _prepare(noisy, cfg)
    T = cfg.resolve_threshold()
    out = _finish(prep, T)
    factor = cfg.threshold_factor if cfg.threshold == "auto" else None
    return DenoiseResult(out, T, factor, prep.operators.distance_count, time.perf_counter() - t0, prep.operators)


def denoise(noisy, cfg: DenoiseConfig) -> np.ndarray:
    return run_denoise(noisy, cfg).image


def calibrate_threshold_factor(
    clean,
    sigma: float,
    cfg: Optional[DenoiseConfig] = None,
    factors: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> tuple[float, dict[float, float]]:
    """Grid-search the factor ``c`` in ``T = c * sigma * patch_side`` on a clean crop.

    Returns the best factor and the PSNR obtained for every candidate.
    """
    if sigma <= 0:
        raise ValueError("calibration needs sigma > 0")
    cfg = replace(cfg or DenoiseConfig(), sigma=sigma)
    factors = np.arange(1.0, 4.0 + 1e-9, 0.25) if factors is None else factors
    clean = np.asarray(clean, dtype=np.float64)
    noisy = add_awgn(clean, sigma, seed)
    prep = _prepare(noisy, cfg)
    scores = {float(c): psnr(clean, _finish(prep, c * sigma * cfg.patch_side)) for c in factors}
    best = max(scores, key=lambda c: (scores[c], -c))
    return best, scores
