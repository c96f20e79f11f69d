"""Intrinsic Sobolev-metric matching of planar curves.

A path of curves is a tensor-product B-spline c(t, theta) with clamped knots
in time and clamped or periodic knots in theta. The Riemannian energy

    E = int_0^1 int (a0 |h|^2 + a1 |D_s h|^2 + a2 |D_s^2 h|^2) |c_theta| dtheta dt,

with h = c_t and D_s = (1/|c_theta|) d/dtheta, is evaluated by Gauss-Legendre
quadrature on every knot cell. The first row of control points is the fitted
source curve; the remaining rows are optimized against a varifold penalty on
the curve at t = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import MatchConfig, bbox_diagonal
from .errors import DimensionMismatch, FitError, KindMismatch, NotImmersed, OrderTooHigh
from .matching import History, MatchResult
from .optim import minimize
from .shapes import SimplicialShape, polyline
from .varifold import VarifoldTarget

TWO_PI = 2.0 * np.pi
IMMERSION_EPS = 1e-12


# --- B-spline bases ---------------------------------------------------------

def clamped_knots(n_ctrl, order, a=0.0, b=1.0):
    inner = np.linspace(a, b, n_ctrl - order + 2)[1:-1]
    return np.concatenate([np.full(order, a), inner, np.full(order, b)])


def periodic_knots(n_ctrl, order, a=0.0, b=TWO_PI):
    h = (b - a) / n_ctrl
    return a + (np.arange(n_ctrl + 2 * order - 1) - (order - 1)) * h


def _cox_de_boor(knots, order, x):
    """Basis values of the given order (degree order - 1) at points x."""
    knots = np.asarray(knots, float)
    x = np.asarray(x, float)
    n_int = len(knots) - 1
    B = np.zeros((len(x), n_int))
    # half-open cells, except that the right end of the domain joins the last nonempty cell
    for i in range(n_int):
        if knots[i] < knots[i + 1]:
            B[:, i] = (knots[i] <= x) & (x < knots[i + 1])
    last = np.flatnonzero(np.diff(knots) > 0)[-1]
    B[x == knots[last + 1], last] = 1.0
    for k in range(2, order + 1):
        nb = n_int - (k - 1)
        Bn = np.zeros((len(x), nb))
        for i in range(nb):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            if d1 > 0:
                Bn[:, i] += (x - knots[i]) / d1 * B[:, i]
            if d2 > 0:
                Bn[:, i] += (knots[i + k] - x) / d2 * B[:, i + 1]
        B = Bn
    return B


def bspline_basis(knots, order, x, deriv=0):
    """Matrix of basis function values (or derivatives) at x, shape (len(x), n)."""
    if deriv > order - 1:
        raise OrderTooHigh(f"derivative {deriv} exceeds spline degree {order - 1}")
    if deriv == 0:
        return _cox_de_boor(knots, order, x)
    knots = np.asarray(knots, float)
    lower = bspline_basis(knots, order - 1, x, deriv - 1)
    n = len(knots) - order
    out = np.zeros((lower.shape[0], n))
    for i in range(n):
        d1 = knots[i + order - 1] - knots[i]
        d2 = knots[i + order] - knots[i + 1]
        if d1 > 0:
            out[:, i] += (order - 1) / d1 * lower[:, i]
        if d2 > 0:
            out[:, i] -= (order - 1) / d2 * lower[:, i + 1]
    return out


@dataclass(frozen=True)
class SplineBasis1D:
    n_ctrl: int
    order: int
    periodic: bool
    a: float
    b: float

    @cached_property
    def knots(self):
        if self.periodic:
            return periodic_knots(self.n_ctrl, self.order, self.a, self.b)
        return clamped_knots(self.n_ctrl, self.order, self.a, self.b)

    @property
    def breakpoints(self):
        return np.unique(self.knots[(self.knots >= self.a) & (self.knots <= self.b)])

    def matrix(self, x, deriv=0):
        x = np.atleast_1d(np.asarray(x, float))
        if self.periodic:
            x = self.a + np.mod(x - self.a, self.b - self.a)
            ext = bspline_basis(self.knots, self.order, x, deriv)
            out = ext[:, : self.n_ctrl].copy()
            out[:, : ext.shape[1] - self.n_ctrl] += ext[:, self.n_ctrl:]
            return out
        return bspline_basis(self.knots, self.order, x, deriv)

    def difference_matrix(self, x):
        """D with  sum_i c_i B_i'(x) = sum_i D[:, i] (c_{i+1} - c_i)  (clamped bases only).

        Acting on control differences makes the derivative of a constant
        coefficient sequence exactly zero.
        """
        if self.periodic:
            raise ValueError("difference form is only provided for clamped bases")
        x = np.atleast_1d(np.asarray(x, float))
        t, k = self.knots, self.order
        lower = bspline_basis(t, k - 1, x, 0)
        scale = np.array([(k - 1) / (t[i + k] - t[i + 1]) for i in range(self.n_ctrl - 1)])
        return lower[:, 1:self.n_ctrl] * scale


def gauss_rule(breaks, npts):
    """Gauss-Legendre nodes and weights on every cell between breakpoints."""
    xg, wg = np.polynomial.legendre.leggauss(npts)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    nodes = (lo[:, None] + half[:, None] * (xg[None, :] + 1.0)).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    points_time: int = 3
    points_theta: int = 5


@dataclass(frozen=True)
class SobolevCoeffs:
    a0: float = 1.0
    a1: float = 1.0
    a2: float = 0.0

    def __post_init__(self):
        if min(self.a0, self.a1, self.a2) < 0 or self.a0 + self.a1 + self.a2 <= 0:
            raise ValueError("Sobolev coefficients must be nonnegative and not all zero")

    @property
    def order(self) -> int:
        return 2 if self.a2 > 0 else (1 if self.a1 > 0 else 0)


class SplinePath:
    """Tensor-product spline path of planar curves.

    ``ctrl[i, j]`` multiplies B_i(t) C_j(theta); t in [0, 1], theta in [0, 2 pi].
    """

    def __init__(self, ctrl, order_t=3, order_theta=4, closed=True):
        ctrl = np.asarray(ctrl, float)
        if ctrl.ndim != 3 or ctrl.shape[2] != 2:
            raise ValueError("ctrl must have shape (N_t, N_theta, 2)")
        if order_t < 2 or order_theta < 3:
            raise ValueError("need order_t >= 2 and order_theta >= 3")
        n_t, n_th, _ = ctrl.shape
        if order_t > n_t or order_theta > n_th:
            raise ValueError("spline order exceeds the number of control points")
        self.ctrl = ctrl
        self.order_t = order_t
        self.order_theta = order_theta
        self.closed = bool(closed)
        self.time = SplineBasis1D(n_t, order_t, False, 0.0, 1.0)
        self.space = SplineBasis1D(n_th, order_theta, self.closed, 0.0, TWO_PI)

    @property
    def shape(self):
        return self.ctrl.shape

    def with_ctrl(self, ctrl) -> "SplinePath":
        return SplinePath(ctrl, self.order_t, self.order_theta, self.closed)

    def evaluate(self, t, theta, dt_order=0, dtheta_order=0) -> np.ndarray:
        """Grid evaluation: array (len(t), len(theta), 2)."""
        Bt = self.time.matrix(t, dt_order)
        Ct = self.space.matrix(theta, dtheta_order)
        return np.einsum("ai,bj,ijk->abk", Bt, Ct, self.ctrl)

    def sample_curve(self, t, n_eval) -> np.ndarray:
        return self.evaluate([t], sample_thetas(n_eval, self.closed))[0]


def eval_path(path: SplinePath, t, theta, dt_order=0, dtheta_order=0) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if not 0.0 <= theta <= TWO_PI:
        raise ValueError("theta must lie in [0, 2 pi]")
    return path.evaluate([t], [theta], dt_order, dtheta_order)[0, 0]


def sample_thetas(n_eval, closed):
    if closed:
        return TWO_PI * np.arange(n_eval) / n_eval
    return np.linspace(0.0, TWO_PI, n_eval)


# --- energy -----------------------------------------------------------------

class EnergyAssembler:
    """Precomputed bases at quadrature nodes for one spline layout."""

    def __init__(self, path: SplinePath, coeffs: SobolevCoeffs, quad: QuadratureRule):
        if path.order_theta - 1 <= coeffs.order:
            raise OrderTooHigh(
                f"spline degree {path.order_theta - 1} in theta must exceed the metric order {coeffs.order}"
            )
        self.coeffs = coeffs
        self.t_nodes, wt = gauss_rule(path.time.breakpoints, quad.points_time)
        self.th_nodes, wth = gauss_rule(path.space.breakpoints, quad.points_theta)
        self.W = np.outer(wt, wth)
        self.Bt0 = path.time.matrix(self.t_nodes, 0)
        self.Dt = path.time.difference_matrix(self.t_nodes)
        self.C = [path.space.matrix(self.th_nodes, d) for d in range(3 if coeffs.a2 > 0 else 2)]

    def _eval(self, ctrl, Bt, C):
        return np.einsum("ai,bj,ijk->abk", Bt, C, ctrl, optimize=True)

    def _back(self, G, Bt, C):
        return np.einsum("ai,bj,abk->ijk", Bt, C, G, optimize=True)

    def energy_and_grad(self, ctrl):
        a0, a1, a2 = self.coeffs.a0, self.coeffs.a1, self.coeffs.a2
        W = self.W
        c_th = self._eval(ctrl, self.Bt0, self.C[1])
        L = np.linalg.norm(c_th, axis=-1)
        if np.any(L < IMMERSION_EPS):
            a, b = np.unravel_index(np.argmin(L), L.shape)
            raise NotImmersed(
                f"|d_theta c| below {IMMERSION_EPS:g} at t={self.t_nodes[a]:.6g}, theta={self.th_nodes[b]:.6g}"
            )
        dctrl = np.diff(ctrl, axis=0)
        c_t = self._eval(dctrl, self.Dt, self.C[0])
        c_tth = self._eval(dctrl, self.Dt, self.C[1])

        ht2 = np.sum(c_t * c_t, axis=-1)
        u2 = np.sum(c_tth * c_tth, axis=-1)
        dens = a0 * ht2 * L + a1 * u2 / L
        gL = a0 * ht2 - a1 * u2 / L**2
        G_t = (2.0 * a0 * W * L)[..., None] * c_t
        G_tth = (2.0 * a1 * W / L)[..., None] * c_tth
        G_th = np.zeros_like(c_th)
        grad = np.zeros_like(ctrl)
        gd = np.zeros_like(dctrl)
        if a2 > 0:
            c_thth = self._eval(ctrl, self.Bt0, self.C[2])
            c_tthth = self._eval(dctrl, self.Dt, self.C[2])
            m = np.sum(c_th * c_thth, axis=-1)
            r = c_tthth / (L**2)[..., None] - c_tth * (m / L**4)[..., None]
            r2 = np.sum(r * r, axis=-1)
            dens = dens + a2 * r2 * L
            g = (2.0 * a2 * L)[..., None] * r
            G_tthth = W[..., None] * g / (L**2)[..., None]
            G_tth = G_tth - W[..., None] * g * (m / L**4)[..., None]
            gm = -np.sum(g * c_tth, axis=-1) / L**4
            gL = gL + a2 * r2 + np.sum(g * (-2.0 * c_tthth / (L**3)[..., None]
                                            + 4.0 * c_tth * (m / L**5)[..., None]), axis=-1)
            G_th = G_th + (W * gm)[..., None] * c_thth
            G_thth = (W * gm)[..., None] * c_th
            grad += self._back(G_thth, self.Bt0, self.C[2])
            gd += self._back(G_tthth, self.Dt, self.C[2])
        G_th = G_th + (W * gL / L)[..., None] * c_th
        E = float(np.sum(W * dens))
        grad += self._back(G_th, self.Bt0, self.C[1])
        gd += self._back(G_t, self.Dt, self.C[0])
        gd += self._back(G_tth, self.Dt, self.C[1])
        grad[1:] += gd
        grad[:-1] -= gd
        return E, grad


def path_energy(path: SplinePath, coeffs: SobolevCoeffs = SobolevCoeffs(),
                quad: QuadratureRule = QuadratureRule()):
    """(E, dE/dctrl). The gradient covers every row; row 0 is held fixed by the solver."""
    return EnergyAssembler(path, coeffs, quad).energy_and_grad(path.ctrl)


# --- fitting and matching -------------------------------------------------

def ordered_points(shape: SimplicialShape) -> np.ndarray:
    """Vertices of a single-chain curve in traversal order."""
    s = shape.simplices
    nxt = {}
    for i, j in s.tolist():
        if i in nxt:
            raise FitError("curve is not a simple chain (vertex with two outgoing segments)")
        nxt[i] = j
    if shape.closed:
        start = int(s[0, 0])
    else:
        heads = set(s[:, 1].tolist())
        starts = [i for i in nxt if i not in heads]
        if len(starts) != 1:
            raise FitError("open curve must be a single chain")
        start = starts[0]
    order = [start]
    while order[-1] in nxt:
        j = nxt[order[-1]]
        if j == start:
            break
        order.append(j)
    if len(order) != shape.n_vertices:
        raise FitError("curve has several components")
    return shape.vertices[order]


def _densify(points, closed, n_samples):
    pts = np.vstack([points, points[:1]]) if closed else points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if closed:
        s = total * np.arange(n_samples) / n_samples
    else:
        s = np.linspace(0.0, total, n_samples)
    samples = np.column_stack([np.interp(s, cum, pts[:, k]) for k in range(pts.shape[1])])
    return samples, TWO_PI * s / total


def fit_curve(shape: SimplicialShape, basis: SplineBasis1D):
    """Least-squares spline fit to a polyline sampled uniformly in arc length.

    Returns (control points, RMS residual at the samples).
    """
    pts = ordered_points(shape)
    samples, thetas = _densify(pts, shape.closed, max(8 * basis.n_ctrl, 4 * len(pts)))
    A = basis.matrix(thetas)
    ctrl, *_ = np.linalg.lstsq(A, samples, rcond=None)
    resid = float(np.sqrt(np.mean(np.sum((A @ ctrl - samples) ** 2, axis=1))))
    return ctrl, resid


def _curve_simplices(n, closed):
    idx = np.arange(n)
    if closed:
        return np.stack([idx, np.roll(idx, -1)], axis=1)
    return np.stack([idx[:-1], idx[1:]], axis=1)


def match_intrinsic(q0: SimplicialShape, q1: SimplicialShape, cfg: MatchConfig, progress=None) -> MatchResult:
    for s in (q0, q1):
        if s.kind != "curve":
            raise KindMismatch("the intrinsic model only handles curves")
        if s.dim != 2:
            raise DimensionMismatch("the intrinsic model only handles planar curves")
    if q0.closed != q1.closed:
        raise KindMismatch("source and target must both be open or both closed")
    sp = cfg.spline
    coeffs = SobolevCoeffs(cfg.sobolev.a0, cfg.sobolev.a1, cfg.sobolev.a2)
    quad = QuadratureRule(sp.quad_time, sp.quad_theta)
    closed = q0.closed
    space = SplineBasis1D(sp.n_theta, sp.order_theta, closed, 0.0, TWO_PI)

    row0, resid = fit_curve(q0, space)
    scale = bbox_diagonal(q0.vertices)
    if resid > sp.fit_tol * scale:
        raise FitError(f"source spline fit residual {resid:.3g} exceeds tolerance {sp.fit_tol * scale:.3g}")

    n_eval = 2 * sp.n_theta
    thetas = sample_thetas(n_eval, closed)
    S = space.matrix(thetas)
    simplices = _curve_simplices(n_eval, closed)
    target_resid = None
    if sp.resample_target:
        row1, target_resid = fit_curve(q1, space)
        target_shape = polyline(S @ row1, closed)
    else:
        target_shape = q1
    kernel = cfg.varifold.kernel(0.25 * bbox_diagonal(q1.vertices))
    target = VarifoldTarget(target_shape, kernel)
    penalty = cfg.penalty

    ctrl0 = np.repeat(row0[None], sp.n_time, axis=0)
    path0 = SplinePath(ctrl0, sp.order_time, sp.order_theta, closed)
    assembler = EnergyAssembler(path0, coeffs, quad)
    free_shape = (sp.n_time - 1, sp.n_theta, 2)
    hist = History(["energy", "fidelity", "total"], progress)

    def unpack(z):
        return np.concatenate([row0[None], z.reshape(free_shape)], axis=0)

    def evaluate(z):
        ctrl = unpack(z)
        E, gE = assembler.energy_and_grad(ctrl)
        d2, gv = target.dist_sq_and_grad(S @ ctrl[-1], simplices)
        grad = gE[1:].copy()
        grad[-1] += penalty * (S.T @ gv)
        total = E + penalty * d2
        return total, grad.ravel(), {"energy": E, "fidelity": d2, "total": total}

    def objective(z):
        f, g, comps = evaluate(z)
        hist.stash(z, comps)
        return f, g

    hist.recompute = lambda z: evaluate(z)[2]
    z0 = ctrl0[1:].ravel()
    res = minimize(objective, z0, cfg.optimizer.options(), callback=hist.callback)
    ctrl = unpack(res.x)
    f, _, comps = evaluate(res.x)
    path = path0.with_ctrl(ctrl)

    def frame_at(t):
        return polyline(path.sample_curve(t, n_eval), closed)

    extra = {
        "fit_residual": resid,
        "n_eval": n_eval,
        "varifold_sigma": kernel.spatial.sigma,
        "sobolev": {"a0": coeffs.a0, "a1": coeffs.a1, "a2": coeffs.a2},
    }
    if target_resid is not None:
        extra["target_fit_residual"] = target_resid
    return MatchResult(
        model="intrinsic",
        solver="trajectory",
        energy=comps["energy"],
        fidelity=comps["fidelity"],
        total=f,
        initial_fidelity=hist.rows[0]["fidelity"],
        status=res.status,
        iterations=res.iterations,
        history=hist.rows,
        frame_at=frame_at,
        arrays={"ctrl": ctrl},
        extra=extra,
    )
