"""Command-line front end: ``rtbwt {denoise,transform,analyze,count}``.

Every option may also come from ``--config FILE`` (``key = value`` lines, keys
named like the long flags). A flag given on the command line wins over the
config file, which wins over the built-in default.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from typing import Any, Optional, Sequence

import numpy as np

from . import io as rio
from .denoise import DenoiseConfig, add_awgn, psnr, run_denoise
from .filters import FILTER_NAMES, make_filter
from .geometry import DistanceMetric, Permutation, PointSet, nn_path, path_cost, total_variation
from .transform import (
    OperatorSet,
    build_operators,
    closed_form_counts,
    combinatorial_count,
    decompose,
    max_depth,
    reconstruct,
)

log = logging.getLogger("rtbwt")

DEFAULTS: dict[str, Any] = {
    "sigma": 0.0,
    "patch": 8,
    "threshold": "auto",
    "filter": "sym8",
    "seed": 0,
    "scope": "all",
    "mode": "column",
    "start": "first",
    "metric": "euclidean",
    "bins": 8,
}

CONVERTERS = {
    "sigma": float,
    "patch": int,
    "depth": int,
    "seed": int,
    "levels": int,
    "n": int,
    "bins": int,
}


class CLIError(Exception):
    pass


def _window(value: Optional[str]) -> Optional[int]:
    if value is None or str(value).lower() in ("none", "0", "off"):
        return None
    return int(value)


def _threshold(value: str):
    return "auto" if str(value).lower() == "auto" else float(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtbwt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        # defaults are None so config-file values can fill the gaps
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--filter", choices=FILTER_NAMES)
        p.add_argument("--seed", type=int)
        p.add_argument("--depth", type=int)
        p.add_argument("--window", help="search window side B, or 'none'")

    d = sub.add_parser("denoise", help="denoise a PGM image")
    common(d)
    d.add_argument("--input")
    d.add_argument("--output")
    d.add_argument("--clean", help="clean reference PGM for PSNR reporting")
    d.add_argument("--add-noise", action="store_true", default=None,
                   help="treat --input as clean and add AWGN of --sigma first")
    d.add_argument("--sigma", type=float)
    d.add_argument("--patch", type=int, help="patch side")
    d.add_argument("--threshold", help="column-norm threshold T, or 'auto'")
    d.add_argument("--scope", choices=("all", "details"))
    d.add_argument("--mode", choices=("column", "coefficient"))
    d.add_argument("--start", choices=("first", "random"))
    d.add_argument("--report")

    t = sub.add_parser("transform", help="decompose a CSV signal on CSV feature points")
    common(t)
    t.add_argument("--signal")
    t.add_argument("--points")
    t.add_argument("--output", help="pyramid CSV")
    t.add_argument("--operators", help="write the permutations to this CSV")
    t.add_argument("--metric", choices=[m.value for m in DistanceMetric])
    t.add_argument("--roundtrip", action="store_true", default=None)

    a = sub.add_parser("analyze", help="compare identity and greedy orderings of a signal")
    common(a)
    a.add_argument("--signal")
    a.add_argument("--points")
    a.add_argument("--metric", choices=[m.value for m in DistanceMetric])
    a.add_argument("--bins", type=int)

    c = sub.add_parser("count", help="distance-count formulas and instrumented count")
    c.add_argument("--config")
    c.add_argument("--n", type=int)
    c.add_argument("--levels", type=int)
    c.add_argument("--depth", type=int)
    c.add_argument("--seed", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge command-line flags over config-file values over defaults."""
    file_values = rio.read_config(args.config) if getattr(args, "config", None) else {}
    merged: dict[str, Any] = {}
    for key, value in vars(args).items():
        if value is None and key in file_values:
            raw = file_values[key]
            if key in ("add_noise", "roundtrip"):
                value = raw.lower() in ("1", "true", "yes", "on")
            else:
                value = CONVERTERS.get(key, str)(raw)
        if value is None:
            value = DEFAULTS.get(key)
        merged[key] = value
    return merged


def _require(opts: dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if not opts.get(k)]
    if missing:
        raise CLIError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def cmd_denoise(opts: dict[str, Any]) -> int:
    _require(opts, "input", "output")
    cfg = DenoiseConfig(
        patch_side=opts["patch"],
        window=_window(opts["window"] or "31"),
        depth=opts["depth"] or 9,
        threshold=_threshold(opts["threshold"]),
        sigma=opts["sigma"],
        filter_name=opts["filter"],
        seed=opts["seed"],
        threshold_scope="details_only" if opts["scope"] == "details" else "all_matrices",
        threshold_mode=opts["mode"],
        start_rule=opts["start"],
    )
    source = rio.read_pgm(opts["input"])
    clean = rio.read_pgm(opts["clean"]) if opts.get("clean") else None
    if opts.get("add_noise"):
        clean = source if clean is None else clean
        noisy = add_awgn(source, cfg.sigma, cfg.seed)
    else:
        noisy = source
    t0 = time.perf_counter()
    result = run_denoise(noisy, cfg)
    wall = time.perf_counter() - t0
    out_q = rio.quantize(result.image)
    rio.write_pgm(result.image, opts["output"])

    report: dict[str, object] = {
        "input": opts["input"],
        "output": opts["output"],
        "size": f"{noisy.shape[0]}x{noisy.shape[1]}",
        "sigma": cfg.sigma,
        "patch_side": cfg.patch_side,
        "window": cfg.window,
        "depth": cfg.depth,
        "filter": cfg.filter_name,
        "threshold_scope": cfg.threshold_scope,
        "threshold_mode": cfg.threshold_mode,
        "threshold_T": f"{result.threshold:.6g}",
        "threshold_factor_c": "n/a" if result.threshold_factor is None else result.threshold_factor,
        "distance_count": result.distance_count,
        "psnr_vs_input": f"{psnr(noisy, result.image):.4f}",
        "psnr_vs_input_quantized": f"{psnr(noisy, out_q):.4f}",
    }
    if clean is not None:
        report["psnr_noisy"] = f"{psnr(clean, noisy):.4f}"
        report["psnr_denoised"] = f"{psnr(clean, result.image):.4f}"
        report["psnr_denoised_quantized"] = f"{psnr(clean, out_q):.4f}"
    report["wall_seconds"] = f"{wall:.3f}"
    text = rio.format_report(report)
    sys.stdout.write(text)
    rio.write_text(opts.get("report"), text)
    return 0


def _load_signal_points(opts: dict[str, Any]) -> tuple[np.ndarray, PointSet]:
    _require(opts, "signal", "points")
    signal = rio.read_signal(opts["signal"])
    points = rio.read_points(opts["points"])
    if signal.size != len(points):
        raise CLIError(f"signal has {signal.size} samples but {len(points)} points were given")
    return signal, points


def cmd_transform(opts: dict[str, Any]) -> int:
    signal, points = _load_signal_points(opts)
    f = make_filter(opts["filter"])
    depth = opts["depth"] or max_depth(signal.size)
    ops = build_operators(points, depth, f, opts["metric"], _window(opts["window"]),
                          seed=opts["seed"])
    pyr = decompose(signal, ops, f)
    outputs = {}
    if opts.get("output"):
        outputs[opts["output"]] = rio.format_pyramid(pyr)
    if opts.get("operators"):
        outputs[opts["operators"]] = rio.format_operators(ops)
    print(f"N: {ops.n}")
    print(f"depth: {ops.depth}")
    print(f"coefficients: {pyr.n_coefficients}")
    print(f"distance_count: {ops.distance_count}")
    if opts.get("roundtrip"):
        err = float(np.max(np.abs(reconstruct(pyr, ops, f) - signal)))
        print(f"max_reconstruction_error: {err:.3e}")
    for path, text in outputs.items():
        rio.write_text(path, text)
    return 0


def _histogram(values: np.ndarray, edges: np.ndarray) -> list[int]:
    return np.histogram(np.abs(values), bins=edges)[0].tolist()


def cmd_analyze(opts: dict[str, Any]) -> int:
    signal, points = _load_signal_points(opts)
    metric = DistanceMetric(opts["metric"])
    f = make_filter(opts["filter"])
    n = signal.size
    depth = opts["depth"] or max_depth(n)
    if depth < 1:
        raise CLIError(f"signal length {n} is odd; no decomposition is possible")
    ident = Permutation.identity(n)
    greedy = nn_path(points, 0, metric, _window(opts["window"]))
    print(f"{'ordering':<10}{'total_variation':>18}{'path_cost':>16}")
    for name, perm in (("identity", ident), ("nn_path", greedy)):
        tv = total_variation(perm.apply(signal))
        print(f"{name:<10}{tv:>18.6g}{path_cost(points, perm, metric):>16.6g}")

    built = build_operators(points, depth, f, metric, _window(opts["window"]), seed=opts["seed"])
    pyramids = {
        "identity": decompose(signal, OperatorSet.identity(n, depth, f.name), f),
        "nn_path": decompose(signal, built, f),
    }
    details = {k: np.concatenate(p.details) for k, p in pyramids.items()}
    top = max(float(np.max(np.abs(v))) for v in details.values())
    floor = max(top * 1e-6, np.finfo(float).tiny)
    edges = np.concatenate([[0.0], np.geomspace(floor, top * (1 + 1e-12), opts["bins"])])
    print(f"detail |coefficient| histogram, depth {depth} ({details['identity'].size} coefficients)")
    print("bin_upper," + ",".join(f"{e:.3g}" for e in edges[1:]))
    for name, v in details.items():
        print(f"{name}," + ",".join(str(c) for c in _histogram(v, edges)))
    return 0


def cmd_count(opts: dict[str, Any]) -> int:
    _require(opts, "n")
    n = opts["n"]
    levels = opts.get("levels") or int(round(math.log2(n))) + 1
    rtbwt, gtbwt, ratio = closed_form_counts(n, levels)
    print(f"N: {n}")
    print(f"L: {levels}")
    print(f"rtbwt={rtbwt:g}")
    print(f"gtbwt={gtbwt:g}")
    print(f"ratio={ratio:.6g}")
    print(f"two_thirds_L={2 * levels / 3:.6g}")
    depth = opts.get("depth") or levels - 1
    if n % 2 ** depth:
        raise CLIError(f"N={n} is not divisible by 2**{depth}; max feasible depth is {max_depth(n)}")
    rng = np.random.default_rng(opts.get("seed") or 0)
    ops = build_operators(PointSet(rng.random((n, 2))), depth, make_filter("haar"), window=None)
    print(f"instrumented={ops.distance_count}")
    print(f"combinatorial={combinatorial_count(n, depth)}")
    print(f"gap_instrumented_minus_rtbwt={ops.distance_count - rtbwt:g}")
    print(f"N_minus_1={n - 1}")
    return 0


COMMANDS = {
    "denoise": cmd_denoise,
    "transform": cmd_transform,
    "analyze": cmd_analyze,
    "count": cmd_count,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except (CLIError, ValueError, OSError) as exc:
        print(f"rtbwt {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
