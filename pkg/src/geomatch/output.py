"""Run-directory writers: frames, energy history, SVG plots and the JSON report."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .shapes import SimplicialShape, save_shape

BASE_COLUMNS = ["iter", "energy", "fidelity", "total"]
FAILED_MARKER = "FAILED"


def energy_columns(model: str) -> list[str]:
    if model == "hybrid":
        return BASE_COLUMNS + ["outer_energy", "intrinsic_energy"]
    return list(BASE_COLUMNS)


def format_row(row: dict, columns) -> str:
    return ",".join(str(row[c]) if c == "iter" else repr(float(row[c])) for c in columns)


class EnergyLog:
    """Appends history rows to energy.csv as the optimizer produces them."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="\n")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def __call__(self, row: dict):
        self._fh.write(format_row(row, self.columns) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_energy_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if len(lines) == 1:
        return header, np.zeros((0, len(header)))
    return header, np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])


def _fmt(x) -> str:
    return repr(float(x))


def svg_path_data(shape: SimplicialShape) -> str:
    """Path data listing every vertex coordinate verbatim (repr floats).

    Consecutive segments sharing a vertex are chained; a chain that returns to
    its first vertex is closed with ``Z``.
    """
    v = shape.vertices
    parts = []
    start = prev = None
    for i, j in shape.simplices:
        if prev is None or i != prev:
            parts.append(f"M {_fmt(v[i, 0])},{_fmt(v[i, 1])}")
            start = i
        if j == start:
            parts.append("Z")
            prev = None
        else:
            parts.append(f"L {_fmt(v[j, 0])},{_fmt(v[j, 1])}")
            prev = j
    return " ".join(parts)


def parse_svg_path_data(d: str) -> list[np.ndarray]:
    """Inverse of :func:`svg_path_data`: one array of points per sub-path."""
    paths, cur = [], None
    for tok in d.split():
        if tok == "M":
            cur = []
            paths.append(cur)
        elif tok in ("L", "Z"):
            continue
        else:
            x, y = tok.split(",")
            cur.append((float(x), float(y)))
    return [np.array(p) for p in paths]


def to_svg(shape: SimplicialShape, size=400) -> str:
    if shape.kind != "curve" or shape.dim != 2:
        raise ValueError("SVG output is only available for planar curves")
    v = shape.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    pad = 0.05 * max(float(np.max(hi - lo)), 1e-12)
    w, h = hi - lo + 2 * pad
    # flip y so the plot has the usual mathematical orientation
    view = f"{_fmt(lo[0] - pad)} {_fmt(-hi[1] - pad)} {_fmt(w)} {_fmt(h)}"
    stroke = _fmt(0.005 * max(w, h))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="{view}">\n'
        f'  <g transform="scale(1,-1)">\n'
        f'    <path d="{svg_path_data(shape)}" fill="none" stroke="black" stroke-width="{stroke}"/>\n'
        f"  </g>\n</svg>\n"
    )


def write_frames(outdir, frames, times):
    outdir = Path(outdir)
    for k, (t, shape) in enumerate(zip(times, frames)):
        ext = ".curve" if shape.kind == "curve" else ".obj"
        save_shape(shape, outdir / f"frame_{k}{ext}")
        if shape.kind == "curve" and shape.dim == 2:
            (outdir / f"frame_{k}.svg").write_text(to_svg(shape))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_report(path, report: dict):
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def write_arrays(path, arrays: dict):
    np.savez(path, **{k: np.asarray(v) for k, v in arrays.items()})


def write_momentum_text(outdir, arrays: dict):
    """Plain-text copy of the optimal controls: momenta.txt (one row per time step) or p0.txt."""
    outdir = Path(outdir)
    if "momenta" in arrays:
        m = np.asarray(arrays["momenta"])
        np.savetxt(outdir / "momenta.txt", m.reshape(m.shape[0], -1), fmt="%.17g",
                   header=f"time steps x (vertices*dim); vertex array shape {list(m.shape[1:])}")
    elif "p0" in arrays:
        np.savetxt(outdir / "p0.txt", np.asarray(arrays["p0"]), fmt="%.17g")
