"""Orthonormal wavelet filter pairs and the single undecimated analysis/synthesis step.

Phase convention (fixed for the whole package): a filter with taps ``t`` and
origin ``o`` acts on a length-``m`` band as the periodic convolution

    y[i] = sum_k t[k] * x[(i - k + o) mod m].

Analysis filters use origin 0. The synthesis filters are the analysis taps
time-reversed and halved, with origin ``len(taps) - 1``, which makes them the
exact adjoints of the analysis filters up to the factor 1/2. Since
``H^T H + G^T G = 2 I`` for an orthonormal QMF pair, one synthesis step
inverts one analysis step at every band length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Symmlet-8 scaling filter (least-asymmetric Daubechies, 8 vanishing moments).
# The usual 16-digit published values leave |H(pi)| ~ 2e-12; these were refined at
# 60-digit precision onto the exact orthonormality and moment conditions and
# differ from the published ones by at most 1.1e-12.
_SYM8 = np.array([
    0.001889950332773465,
    -0.0003029205147315696,
    -0.014952258337059793,
    0.0038087520139143687,
    0.0491371796737173,
    -0.027219029917142232,
    -0.051945838107796745,
    0.3644418948363743,
    0.7771857516996549,
    0.4813596512588593,
    -0.0612733590679497,
    -0.14329423835124785,
    0.007607487325024407,
    0.031695087811525254,
    -0.0005421323318121716,
    -0.0033824159510081773,
])

_HAAR = np.array([1.0, 1.0]) / np.sqrt(2.0)

_LOWPASS = {"haar": _HAAR, "sym8": _SYM8}

FILTER_NAMES = tuple(_LOWPASS)


@dataclass(frozen=True)
class WaveletFilterPair:
    name: str
    analysis_low: np.ndarray
    analysis_high: np.ndarray
    synthesis_low: np.ndarray
    synthesis_high: np.ndarray

    @property
    def length(self) -> int:
        return self.analysis_low.size

    @property
    def synthesis_origin(self) -> int:
        return self.length - 1


def qmf(lowpass: np.ndarray) -> np.ndarray:
    """Alternating-sign time reversal: ``g[k] = (-1)**k * h[L-1-k]``."""
    k = np.arange(lowpass.size)
    return (-1.0) ** k * lowpass[::-1]


def make_filter(name: str) -> WaveletFilterPair:
    try:
        h = _LOWPASS[name.lower()].copy()
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose one of {', '.join(FILTER_NAMES)}") from None
    g = qmf(h)
    taps = [h, g, 0.5 * h[::-1], 0.5 * g[::-1]]
    for t in taps:
        t.setflags(write=False)
    return WaveletFilterPair(name.lower(), *taps)


def periodic_convolve(x: np.ndarray, taps: np.ndarray, origin: int = 0, axis: int = -1) -> np.ndarray:
    """Circular convolution along ``axis``, any band length >= 1."""
    x = np.asarray(x, dtype=np.float64)
    axis = axis % x.ndim
    m = x.shape[axis]
    L = len(taps)
    # ext[j] = x[(j - (L - 1) + origin) mod m], so x[(i - k + origin) mod m] = ext[i + L - 1 - k]
    ext = np.take(x, (np.arange(m + L - 1) - (L - 1) + origin) % m, axis=axis)
    lead = (slice(None),) * axis
    out = np.zeros_like(x)
    for k, t in enumerate(taps):
        if t != 0.0:
            out += t * ext[lead + (slice(L - 1 - k, L - 1 - k + m),)]
    return out


def analysis_step(band, f: WaveletFilterPair) -> tuple[np.ndarray, np.ndarray]:
    """Undecimated lowpass and highpass outputs, both the input's length."""
    band = np.asarray(band, dtype=np.float64)
    if band.shape[-1] < 1:
        raise ValueError("empty band")
    return periodic_convolve(band, f.analysis_low), periodic_convolve(band, f.analysis_high)


def split_even_odd(v) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(odd, even)`` in 1-based naming: odd holds samples 1, 3, 5, ..."""
    v = np.asarray(v)
    if v.shape[-1] % 2:
        raise ValueError(f"cannot split a band of odd length {v.shape[-1]}")
    return v[..., 0::2], v[..., 1::2]


def merge_odd_even(odd, even) -> np.ndarray:
    odd = np.asarray(odd)
    even = np.asarray(even)
    if odd.shape != even.shape:
        raise ValueError(f"odd/even shape mismatch: {odd.shape} vs {even.shape}")
    out = np.empty(odd.shape[:-1] + (2 * odd.shape[-1],), dtype=np.result_type(odd, even))
    out[..., 0::2] = odd
    out[..., 1::2] = even
    return out


def synthesis_step(low_odd, low_even, detail, f: WaveletFilterPair) -> np.ndarray:
    low = merge_odd_even(low_odd, low_even)
    detail = np.asarray(detail, dtype=np.float64)
    if detail.shape != low.shape:
        raise ValueError(f"detail shape {detail.shape} does not match merged lowpass {low.shape}")
    o = f.synthesis_origin
    return periodic_convolve(low, f.synthesis_low, o) + periodic_convolve(detail, f.synthesis_high, o)
