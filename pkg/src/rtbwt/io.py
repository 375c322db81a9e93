"""PGM images, CSV exchange formats and key = value config files.

CSV formats use 1-based indices for permutations, bands and positions.
"""
from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .filters import WaveletFilterPair
from .geometry import Permutation, PointSet
from .transform import CoefficientPyramid, OperatorSet

PathLike = Union[str, os.PathLike]


class PGMError(ValueError):
    pass


class UnsupportedMagicError(PGMError):
    pass


class MalformedHeaderError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeaderError("header ended early")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise UnsupportedMagicError(f"unsupported magic {magic!r}; expected P5 or P2")
    tokens, pos = _header_tokens(data[2:], 3)
    pos += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeaderError(f"non-integer header fields {tokens!r}") from None
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise MalformedHeaderError(f"invalid dimensions or maxval: {width} {height} {maxval}")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        payload = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = count * dtype.itemsize
        if len(payload) < need:
            raise TruncatedPayloadError(f"payload has {len(payload)} bytes, expected {need}")
        values = np.frombuffer(payload[:need], dtype=dtype)
    else:
        body = re.sub(rb"#[^\r\n]*", b" ", data[pos:])
        fields = body.split()
        if len(fields) < count:
            raise TruncatedPayloadError(f"payload has {len(fields)} samples, expected {count}")
        try:
            values = np.array([int(v) for v in fields[:count]])
        except ValueError:
            raise MalformedHeaderError("non-integer sample in P2 payload") from None
    if values.max(initial=0) > maxval:
        raise MalformedHeaderError(f"sample exceeds maxval {maxval}")
    return values.reshape(height, width).astype(np.float64)


def read_pgm(path: PathLike) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def encode_pgm(img) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    raster = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + raster.tobytes()


def quantize(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255)


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write via a temporary file so a failure never leaves a partial output."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(img, path: PathLike) -> None:
    atomic_write(path, encode_pgm(img))


def _csv_text(rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def format_points(points: PointSet) -> str:
    lines = []
    for i in range(len(points)):
        line = ",".join(repr(float(v)) for v in points.coords[i])
        if points.anchors is not None:
            line += f",@{points.anchors[i, 0]},{points.anchors[i, 1]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_points(text: str) -> PointSet:
    coords, anchors = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        body, _, anchor = line.partition("@")
        try:
            coords.append([float(v) for v in body.strip().rstrip(",").split(",")])
            if anchor:
                r, c = anchor.split(",")
                anchors.append((int(r), int(c)))
        except ValueError:
            raise ValueError(f"points CSV line {lineno}: cannot parse {raw!r}") from None
    if not coords:
        raise ValueError("points CSV contains no points")
    if anchors and len(anchors) != len(coords):
        raise ValueError("points CSV: anchors must be present on every line or on none")
    if len({len(c) for c in coords}) != 1:
        raise ValueError("points CSV: rows have different dimensions")
    return PointSet(np.array(coords), np.array(anchors) if anchors else None)


def read_points(path: PathLike) -> PointSet:
    return parse_points(Path(path).read_text())


def parse_signal(text: str) -> np.ndarray:
    fields = [f for f in re.split(r"[,\s]+", re.sub(r"#[^\n]*", "", text)) if f]
    try:
        return np.array([float(f) for f in fields])
    except ValueError as exc:
        raise ValueError(f"signal CSV: {exc}") from None


def read_signal(path: PathLike) -> np.ndarray:
    return parse_signal(Path(path).read_text())


def format_signal(v) -> str:
    return "\n".join(repr(float(x)) for x in np.asarray(v).ravel()) + "\n"


def format_permutations(perms: Iterable[Permutation]) -> str:
    return _csv_text([(p.order + 1).tolist() for p in perms])


def parse_permutations(text: str) -> list[Permutation]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return [Permutation(np.array([int(v) for v in r]) - 1) for r in rows]


def format_operators(ops: OperatorSet) -> str:
    rows = [("stage", "level", "band", "order")]
    for k, stage in enumerate(ops.perms):
        for b, p in enumerate(stage):
            rows.append((k, ops.level(k), b + 1, " ".join(str(i + 1) for i in p)))
    return _csv_text(rows)


def parse_operators(text: str, filter_name: str = "haar") -> OperatorSet:
    reader = csv.DictReader(io.StringIO(text))
    stages: dict[int, list[np.ndarray]] = {}
    for row in reader:
        k = int(row["stage"])
        stages.setdefault(k, []).append(np.array([int(v) for v in row["order"].split()]) - 1)
    depth = len(stages)
    perms = [np.stack(stages[k]) for k in range(depth)]
    return OperatorSet.from_permutations(perms[0].shape[1], depth, perms, filter_name)


def format_pyramid(pyr: CoefficientPyramid) -> str:
    """One row per coefficient; stage ``D`` (kind ``approx``) holds the approximation."""
    rows = [("stage", "kind", "band", "position", "value")]
    for k in range(pyr.depth + 1):
        kind = "approx" if k == pyr.depth else "detail"
        bands = 2 ** min(k, pyr.depth)
        for b in range(bands):
            for j, v in enumerate(np.asarray(pyr.band(k, b)).ravel()):
                rows.append((k, kind, b + 1, j + 1, repr(float(v))))
    return _csv_text(rows)


def format_filter(f: WaveletFilterPair) -> str:
    rows = [("k", "analysis_low", "analysis_high", "synthesis_low", "synthesis_high")]
    for k in range(f.length):
        rows.append((k, *(repr(float(t[k])) for t in (
            f.analysis_low, f.analysis_high, f.synthesis_low, f.synthesis_high))))
    return _csv_text(rows)


def read_config(path: PathLike) -> dict[str, str]:
    """``key = value`` per line; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def format_report(entries: dict[str, object]) -> str:
    return "".join(f"{k}: {v}\n" for k, v in entries.items())


def write_text(path: Optional[PathLike], text: str) -> None:
    if path is not None:
        atomic_write(path, text)
