"""Small deterministic shape corpus used by tests, selftest and bundled fixtures."""
from __future__ import annotations

import numpy as np

from .shapes import SimplicialShape, polyline

N_CURVE = 32


def _angles(n):
    return 2.0 * np.pi * np.arange(n) / n


def circle(n=N_CURVE, radius=1.0, center=(0.0, 0.0)):
    t = _angles(n)
    return polyline(np.column_stack([radius * np.cos(t), radius * np.sin(t)]) + center, closed=True)


def ellipse(n=N_CURVE, a=1.5, b=0.6, center=(0.0, 0.0)):
    t = _angles(n)
    return polyline(np.column_stack([a * np.cos(t), b * np.sin(t)]) + center, closed=True)


def square(n=N_CURVE, side=2.0):
    if n % 4:
        raise ValueError("square needs a multiple of 4 vertices")
    m = n // 4
    s = np.linspace(-1.0, 1.0, m, endpoint=False) * side / 2
    h = side / 2
    pts = np.concatenate([
        np.column_stack([s, np.full(m, -h)]),
        np.column_stack([np.full(m, h), s]),
        np.column_stack([-s, np.full(m, h)]),
        np.column_stack([np.full(m, -h), -s]),
    ])
    return polyline(pts, closed=True)


def star(n=N_CURVE, arms=4, r_in=0.6, r_out=1.2):
    t = _angles(n)
    r = 0.5 * (r_in + r_out) + 0.5 * (r_out - r_in) * np.cos(arms * t)
    return polyline(np.column_stack([r * np.cos(t), r * np.sin(t)]), closed=True)


def necked_ellipse(n=N_CURVE, a=1.6, b=0.8, neck=0.55):
    """Ellipse pinched at its middle (a peanut outline)."""
    t = _angles(n)
    y = b * np.sin(t) * (1.0 - neck * np.exp(-4.0 * np.cos(t) ** 2))
    return polyline(np.column_stack([a * np.cos(t), y]), closed=True)


def arc(n=N_CURVE, radius=1.0, span=1.5 * np.pi):
    t = np.linspace(0.0, span, n)
    return polyline(np.column_stack([radius * np.cos(t), radius * np.sin(t)]), closed=False)


def curve_corpus():
    return {
        "circle": circle(),
        "ellipse": ellipse(),
        "square": square(),
        "star": star(),
        "necked_ellipse": necked_ellipse(),
        "arc": arc(),
    }


def icosphere(subdivisions=1, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Outward-oriented triangulated sphere."""
    p = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [row / np.linalg.norm(row) for row in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                cache[key] = len(verts)
                verts.append(m / np.linalg.norm(m))
            return cache[key]

        new = []
        for i, j, k in faces:
            a, b, c = mid(i, j), mid(j, k), mid(k, i)
            new += [[i, a, c], [a, j, b], [c, b, k], [a, b, c]]
        faces = new
    return SimplicialShape(radius * np.array(verts) + center, np.array(faces), "surface")


def torus_patch(nu=10, nv=6, R=1.0, r=0.4, u_span=np.pi, v_span=np.pi):
    """Open patch of a torus, triangulated on a regular (u, v) grid."""
    u = np.linspace(0.0, u_span, nu)
    v = np.linspace(-v_span / 2, v_span / 2, nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([
        ((R + r * np.cos(V)) * np.cos(U)).ravel(),
        ((R + r * np.cos(V)) * np.sin(U)).ravel(),
        (r * np.sin(V)).ravel(),
    ])
    tris = []
    for i in range(nu - 1):
        for j in range(nv - 1):
            a, b = i * nv + j, (i + 1) * nv + j
            tris += [[a, b, b + 1], [a, b + 1, a + 1]]
    return SimplicialShape(pts, np.array(tris), "surface")


def surface_corpus():
    return {
        "sphere": icosphere(1),
        "sphere_shifted": icosphere(1, radius=1.3, center=(0.4, -0.2, 0.1)),
        "torus_patch": torus_patch(),
    }


def parallel_segments(offset=1.0):
    """Two unit segments along x, the second shifted by ``offset`` in y."""
    a = polyline([[0.0, 0.0], [1.0, 0.0]])
    b = polyline([[0.0, offset], [1.0, offset]])
    return a, b


def compression_pair():
    """Source circle and necked target for the edge-compression comparison."""
    return circle(radius=1.2), necked_ellipse()


def bundled_shapes():
    """Every shape shipped in the package data directory, keyed by file name."""
    shapes = {f"{name}.curve": s for name, s in curve_corpus().items()}
    shapes.update({f"{name}.obj": s for name, s in surface_corpus().items()})
    src, tgt = compression_pair()
    shapes["neck_source.curve"] = src
    shapes["neck_target.curve"] = tgt
    shapes["circle_translated.curve"] = circle(center=(1.0, 0.0))
    a, b = parallel_segments()
    shapes["segment_a.curve"] = a
    shapes["segment_b.curve"] = b
    return shapes


BUNDLED_CONFIGS = {
    "circle_ellipse.json": {"model": "lddmm", "solver": "trajectory", "penalty": 100.0},
    "neck_hybrid.json": {"model": "hybrid", "stiffness": {"weight": 1.0, "variant": "tangential"}},
    "translated_circle_intrinsic.json": {
        "model": "intrinsic", "penalty": 1000.0, "sobolev": {"a0": 1.0, "a1": 0.0, "a2": 0.0},
    },
}


def data_dir():
    from importlib.resources import files
    return files("geomatch") / "data"


def bundled(name):
    """Load a bundled shape by file name, e.g. ``bundled("circle.curve")``."""
    from .shapes import load_shape
    return load_shape(str(data_dir() / name))


def write_bundled(directory):
    import json
    from pathlib import Path
    from .shapes import save_shape

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, shape in bundled_shapes().items():
        save_shape(shape, directory / name)
    for name, cfg in BUNDLED_CONFIGS.items():
        (directory / name).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
