"""Discrete curves and triangulated surfaces.

A shape is a vertex array plus an oriented simplex list (segments for curves,
triangles for surfaces). Per-simplex features (barycenter, unit orientation,
measure) are what the varifold and hybrid terms consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSimplex,
    InvalidShape,
    NotARotation,
    ParseError,
    UnsupportedFormat,
)

MEASURE_EPS = 1e-14


@dataclass(frozen=True)
class CellFeatures:
    barycenters: np.ndarray  # (N_S, d)
    orientations: np.ndarray  # (N_S, d), unit
    measures: np.ndarray  # (N_S,)

    @property
    def total_measure(self) -> float:
        return float(self.measures.sum())


@dataclass(frozen=True, eq=False)
class SimplicialShape:
    vertices: np.ndarray
    simplices: np.ndarray
    kind: str = "curve"
    closed: bool = False
    _features: CellFeatures | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        s = np.array(self.simplices, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise InvalidShape(f"vertices must be (N_V, d) with d in {{2,3}}, got {v.shape}")
        if self.kind not in ("curve", "surface"):
            raise InvalidShape(f"unknown kind {self.kind!r}")
        p = 2 if self.kind == "curve" else 3
        if s.size == 0:
            s = s.reshape(0, p)
        if s.ndim != 2 or s.shape[1] != p:
            raise InvalidShape(f"{self.kind} simplices must have {p} indices, got shape {s.shape}")
        if len(s) == 0:
            raise InvalidShape("shape has no simplices")
        if self.kind == "surface" and v.shape[1] != 3:
            raise InvalidShape("surfaces require ambient dimension 3")
        if self.kind == "surface" and self.closed:
            raise InvalidShape("the closed flag only applies to curves")
        if s.min() < 0 or s.max() >= len(v):
            raise InvalidShape("simplex index out of range")
        for a in range(p):
            for b in range(a + 1, p):
                if np.any(s[:, a] == s[:, b]):
                    raise InvalidShape("a simplex repeats a vertex index")
        if not np.all(np.isfinite(v)):
            raise InvalidShape("non-finite vertex coordinates")
        if self.kind == "curve" and self.closed:
            n = len(v)
            tails = np.bincount(s[:, 0], minlength=n)
            heads = np.bincount(s[:, 1], minlength=n)
            if not (np.all(tails == 1) and np.all(heads == 1)):
                raise InvalidShape(
                    "closed curve must use every vertex exactly once as tail and once as head"
                )
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        object.__setattr__(self, "closed", bool(self.closed))
        # raises DegenerateSimplex
        object.__setattr__(self, "_features", _compute_features(v, s))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    def with_vertices(self, vertices) -> "SimplicialShape":
        """Same connectivity, new vertex positions."""
        return SimplicialShape(vertices, self.simplices, self.kind, self.closed)

    def __eq__(self, other):
        if not isinstance(other, SimplicialShape):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.closed == other.closed
            and self.vertices.shape == other.vertices.shape
            and self.simplices.shape == other.simplices.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.simplices, other.simplices)
        )

    __hash__ = None


def polyline(points, closed=False) -> SimplicialShape:
    """Curve through ``points`` in order, optionally closing back to the first."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    idx = np.arange(n)
    if closed:
        segs = np.stack([idx, np.roll(idx, -1)], axis=1)
    else:
        segs = np.stack([idx[:-1], idx[1:]], axis=1)
    return SimplicialShape(points, segs, "curve", closed)


def _compute_features(v, s):
    if s.shape[1] == 2:
        e = v[s[:, 1]] - v[s[:, 0]]
        m = np.linalg.norm(e, axis=1)
        bad = np.flatnonzero(m < MEASURE_EPS)
        if bad.size:
            raise DegenerateSimplex(f"segment {int(bad[0])} has zero length")
        return CellFeatures(0.5 * (v[s[:, 0]] + v[s[:, 1]]), e / m[:, None], m)
    n = np.cross(v[s[:, 1]] - v[s[:, 0]], v[s[:, 2]] - v[s[:, 0]])
    nn = np.linalg.norm(n, axis=1)
    bad = np.flatnonzero(nn < MEASURE_EPS)
    if bad.size:
        raise DegenerateSimplex(f"triangle {int(bad[0])} has zero area")
    return CellFeatures(v[s].mean(axis=1), n / nn[:, None], 0.5 * nn)


def features_from_arrays(vertices, simplices) -> CellFeatures:
    """Features without building a validated shape (hot loops)."""
    return _compute_features(np.asarray(vertices, dtype=float), np.asarray(simplices))


def cell_features(shape: SimplicialShape) -> CellFeatures:
    return shape._features


def rigid_transform(shape: SimplicialShape, R, b) -> SimplicialShape:
    R = np.asarray(R, dtype=float)
    b = np.asarray(b, dtype=float)
    d = shape.dim
    if R.shape != (d, d) or b.shape != (d,):
        raise NotARotation(f"expected R of shape {(d, d)} and b of shape {(d,)}")
    if not np.allclose(R.T @ R, np.eye(d), atol=1e-10, rtol=0) or abs(np.linalg.det(R) - 1) > 1e-10:
        raise NotARotation("R is not a proper rotation")
    return shape.with_vertices(shape.vertices @ R.T + b)


def random_rotation(d, rng) -> np.ndarray:
    """Uniform random proper rotation (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def subdivide(shape: SimplicialShape) -> SimplicialShape:
    v = shape.vertices
    s = shape.simplices
    if shape.kind == "curve":
        nv = len(v)
        mids = 0.5 * (v[s[:, 0]] + v[s[:, 1]])
        m = nv + np.arange(len(s))
        new_s = np.empty((2 * len(s), 2), dtype=np.int64)
        new_s[0::2] = np.stack([s[:, 0], m], axis=1)
        new_s[1::2] = np.stack([m, s[:, 1]], axis=1)
        return SimplicialShape(np.vstack([v, mids]), new_s, "curve", shape.closed)

    edge_index: dict[tuple[int, int], int] = {}
    new_v = [row for row in v]

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in edge_index:
            edge_index[key] = len(new_v)
            new_v.append(0.5 * (v[i] + v[j]))
        return edge_index[key]

    tris = []
    for i, j, k in s.tolist():
        ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
        tris += [(i, ij, ki), (ij, j, jk), (ki, jk, k), (ij, jk, ki)]
    return SimplicialShape(np.array(new_v), np.array(tris), "surface", False)


# --- file I/O -------------------------------------------------------------

def _format_for(path, fmt):
    if fmt is not None:
        fmt = fmt.lower().lstrip(".")
    else:
        fmt = Path(path).suffix.lower().lstrip(".")
    if fmt not in ("curve", "obj"):
        raise UnsupportedFormat(f"unsupported shape format {fmt!r} for {path}")
    return fmt


def load_shape(path, format=None) -> SimplicialShape:
    fmt = _format_for(path, format)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "curve":
        return parse_curve(text)
    return parse_obj(text)


def save_shape(shape: SimplicialShape, path, format=None) -> None:
    fmt = _format_for(path, format)
    if fmt == "curve":
        if shape.kind != "curve":
            raise UnsupportedFormat("the curve format only stores curves")
        Path(path).write_text(format_curve(shape))
    else:
        if shape.kind != "surface":
            raise UnsupportedFormat("the OBJ subset only stores triangulated surfaces")
        Path(path).write_text(format_obj(shape))


def format_curve(shape: SimplicialShape) -> str:
    lines = [f"curve {shape.dim} {shape.n_vertices} {shape.n_simplices} {int(shape.closed)}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in shape.vertices]
    lines += [f"{i} {j}" for i, j in shape.simplices.tolist()]
    return "\n".join(lines) + "\n"


def format_obj(shape: SimplicialShape) -> str:
    lines = ["v " + " ".join(repr(float(x)) for x in row) for row in shape.vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in shape.simplices.tolist()]
    return "\n".join(lines) + "\n"


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_curve(text: str) -> SimplicialShape:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty curve file", 1)
    lineno, head = lines[0]
    if len(head) != 5 or head[0] != "curve":
        raise ParseError("expected header 'curve <d> <N_V> <N_S> <closed>'", lineno)
    try:
        d, nv, ns, closed = (int(x) for x in head[1:])
    except ValueError:
        raise ParseError("non-integer header field", lineno) from None
    if d not in (2, 3) or nv < 1 or ns < 1 or closed not in (0, 1):
        raise ParseError("invalid header values", lineno)
    body = lines[1:]
    if len(body) != nv + ns:
        where = body[-1][0] + 1 if body else lineno + 1
        raise ParseError(f"expected {nv} vertex and {ns} segment lines, found {len(body)}", where)
    verts = []
    for ln, toks in body[:nv]:
        if len(toks) != d:
            raise ParseError(f"expected {d} coordinates", ln)
        try:
            verts.append([float(t) for t in toks])
        except ValueError:
            raise ParseError("bad coordinate", ln) from None
    segs = []
    for ln, toks in body[nv:]:
        if len(toks) != 2:
            raise ParseError("expected 2 vertex indices", ln)
        try:
            segs.append([int(t) for t in toks])
        except ValueError:
            raise ParseError("bad vertex index", ln) from None
        if not all(0 <= i < nv for i in segs[-1]):
            raise ParseError("vertex index out of range", ln)
    try:
        return SimplicialShape(np.array(verts), np.array(segs), "curve", bool(closed))
    except InvalidShape as exc:
        raise ParseError(str(exc)) from exc


def parse_obj(text: str) -> SimplicialShape:
    verts, faces = [], []
    for ln, toks in _content_lines(text):
        tag = toks[0]
        if tag == "v":
            if len(toks) != 4:
                raise ParseError("expected 'v x y z'", ln)
            try:
                verts.append([float(t) for t in toks[1:]])
            except ValueError:
                raise ParseError("bad vertex coordinate", ln) from None
        elif tag == "f":
            if len(toks) != 4:
                raise ParseError("only triangular faces 'f i j k' are supported", ln)
            try:
                face = [int(t) - 1 for t in toks[1:]]
            except ValueError:
                raise ParseError("bad face index (texture/normal slashes are not supported)", ln) from None
            if min(face) < 0:
                raise ParseError("face indices are 1-based", ln)
            faces.append((ln, face))
        elif tag in ("o", "g", "s"):
            continue
        else:
            raise ParseError(f"unsupported OBJ record {tag!r}", ln)
    if not verts or not faces:
        raise ParseError("OBJ file needs at least one vertex and one face")
    for ln, face in faces:
        if max(face) >= len(verts):
            raise ParseError("face index out of range", ln)
    try:
        return SimplicialShape(np.array(verts), np.array([f for _, f in faces]), "surface")
    except InvalidShape as exc:
        raise ParseError(str(exc)) from exc
