"""Command-line front end: ``geomatch dist | match | selftest``.

Exit codes: 0 success, 1 selftest failure, 2 bad input (unreadable or
malformed shape/config), 3 source/target mismatch, 4 solver failure.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, merge_overrides, MatchConfig
from .errors import (
    DimensionMismatch,
    GeomatchError,
    KindMismatch,
    OrderTooHigh,
    ParseError,
    ShapeError,
    UnsupportedFormat,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MISMATCH, EXIT_SOLVER = 0, 1, 2, 3, 4


def _err(msg):
    print(f"geomatch: {msg}", file=sys.stderr)


def thread_limit():
    """Context capping BLAS threads to GEOMATCH_THREADS (unset or 0: no cap)."""
    raw = os.environ.get("GEOMATCH_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GEOMATCH_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("GEOMATCH_THREADS must be >= 0")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _load(path):
    from .shapes import load_shape
    return load_shape(path)


def _input_errors():
    return (ParseError, UnsupportedFormat, ShapeError, OSError)


# --- dist -------------------------------------------------------------------

def cmd_dist(args) -> int:
    from .kernels import SpatialProfile, SphericalProfile
    from .varifold import VarifoldKernel, varifold_dist_sq

    try:
        a, b = _load(args.shape_a), _load(args.shape_b)
    except _input_errors() as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        k = VarifoldKernel(SpatialProfile(args.spatial, args.spatial_sigma),
                           SphericalProfile(args.spherical, args.spherical_sigma))
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        d2 = varifold_dist_sq(a, b, k)
    except (DimensionMismatch, KindMismatch) as exc:
        _err(str(exc))
        return EXIT_MISMATCH
    print(f"dist_sq={d2:.12g}")
    print(f"dist={math.sqrt(d2):.12g}")
    return EXIT_OK


# --- match ------------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def effective_config(args) -> MatchConfig:
    cfg = load_config(args.config) if args.config else MatchConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = _parse_value(value)
    for key, attr in (("model", "model"), ("solver", "solver"), ("penalty", "penalty"), ("output_dir", "out")):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    return merge_overrides(cfg, overrides) if overrides else cfg


def _fail(outdir: Path, message: str, report: dict):
    from .output import FAILED_MARKER, write_report

    (outdir / FAILED_MARKER).write_text(message + "\n")
    report["status"] = "failed"
    report["error"] = message
    write_report(outdir / "report.json", report)


def cmd_match(args) -> int:
    from . import output
    from .solvers import check_pair, match

    t_start = time.perf_counter()
    try:
        cfg = effective_config(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_INPUT
    try:
        q0, q1 = _load(args.source), _load(args.target)
    except _input_errors() as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        check_pair(q0, q1)
    except (DimensionMismatch, KindMismatch) as exc:
        _err(str(exc))
        return EXIT_MISMATCH

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / output.FAILED_MARKER).unlink(missing_ok=True)
    report = {
        "geomatch_version": __version__,
        "source": str(args.source),
        "target": str(args.target),
        "config": cfg.model_dump(),
    }
    log = output.EnergyLog(outdir / "energy.csv", output.energy_columns(cfg.model))
    try:
        t_solve = time.perf_counter()
        with thread_limit():
            result = match(q0, q1, cfg, progress=log)
        solve_seconds = time.perf_counter() - t_solve
        frames = result.frames(cfg.frame_times)
    except (ConfigError, OrderTooHigh) as exc:
        log.close()
        _fail(outdir, f"config error: {exc}", report)
        _err(f"config error: {exc}")
        return EXIT_INPUT
    except GeomatchError as exc:
        log.close()
        msg = f"{type(exc).__name__}: {exc}"
        _fail(outdir, msg, report)
        _err(msg)
        return EXIT_SOLVER
    log.close()

    output.write_frames(outdir, frames, cfg.frame_times)
    output.write_arrays(outdir / "arrays.npz", result.arrays)
    output.write_momentum_text(outdir, result.arrays)
    report.update(result.report())
    report["frame_times"] = list(cfg.frame_times)
    report["timings"] = {"solve_seconds": solve_seconds, "total_seconds": time.perf_counter() - t_start}
    output.write_report(outdir / "report.json", report)
    print(f"{result.model}/{result.solver}: status={result.status} iterations={result.iterations} "
          f"energy={result.energy:.6g} fidelity={result.fidelity:.6g} "
          f"(reduced {100 * result.fidelity_reduction:.2f}%) -> {outdir}")
    return EXIT_OK


# --- selftest ---------------------------------------------------------------

def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    with thread_limit():
        ok = run_selftest(sys.stdout)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geomatch", description="Varifold distances and shape matching.")
    p.add_argument("--version", action="version", version=f"geomatch {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dist", help="varifold distance between two shapes")
    d.add_argument("shape_a")
    d.add_argument("shape_b")
    d.add_argument("--spatial", choices=["gaussian", "cauchy"], default="gaussian")
    d.add_argument("--spatial-sigma", type=float, default=1.0)
    d.add_argument("--spherical", choices=["linear", "sphere_gaussian"], default="linear")
    d.add_argument("--spherical-sigma", type=float, default=1.0)
    d.set_defaults(func=cmd_dist)

    m = sub.add_parser("match", help="match a source shape onto a target")
    m.add_argument("source")
    m.add_argument("target")
    m.add_argument("config", nargs="?", help="JSON config (a previous report.json also works)")
    m.add_argument("--out", help="output directory (overrides output_dir)")
    m.add_argument("--model", choices=["intrinsic", "lddmm", "hybrid"])
    m.add_argument("--solver", choices=["trajectory", "shooting"])
    m.add_argument("--penalty", type=float)
    m.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry by dotted key, e.g. varifold.spatial_sigma=0.5")
    m.set_defaults(func=cmd_match)

    s = sub.add_parser("selftest", help="run the fast invariant suite")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
