"""Oriented varifold inner products, squared distances and vertex gradients.

Each shape is reduced to its simplex barycenters, unit orientations and
measures; the kernel is rho(|x - x'|^2) * gamma(<t, t'>).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, KindMismatch
from .kernels import SpatialProfile, SphericalProfile
from .shapes import CellFeatures, SimplicialShape, cell_features, features_from_arrays


@dataclass(frozen=True)
class VarifoldKernel:
    spatial: SpatialProfile = field(default_factory=SpatialProfile)
    spherical: SphericalProfile = field(default_factory=SphericalProfile)


def _check_pair(s1: SimplicialShape, s2: SimplicialShape):
    if s1.dim != s2.dim:
        raise DimensionMismatch(f"ambient dimensions differ: {s1.dim} vs {s2.dim}")
    if s1.kind != s2.kind:
        raise KindMismatch(f"cannot compare a {s1.kind} with a {s2.kind}")


def _order_key(f: CellFeatures):
    return (len(f.measures), f.barycenters.tobytes(), f.orientations.tobytes(), f.measures.tobytes())


def features_inner(f1: CellFeatures, f2: CellFeatures, k: VarifoldKernel) -> float:
    # reduce in a canonical operand order so that swapping the arguments is bit-exact
    if _order_key(f1) > _order_key(f2):
        f1, f2 = f2, f1
    diff = f1.barycenters[:, None, :] - f2.barycenters[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    cos = f1.orientations @ f2.orientations.T
    w = kernels.rho(k.spatial, r2) * kernels.gamma(k.spherical, cos)
    return float(f1.measures @ (w @ f2.measures))


def varifold_inner(s1: SimplicialShape, s2: SimplicialShape, k: VarifoldKernel) -> float:
    _check_pair(s1, s2)
    return features_inner(cell_features(s1), cell_features(s2), k)


def varifold_dist_sq(s1: SimplicialShape, s2: SimplicialShape, k: VarifoldKernel) -> float:
    _check_pair(s1, s2)
    f1, f2 = cell_features(s1), cell_features(s2)
    d2 = features_inner(f1, f1, k) - 2.0 * features_inner(f1, f2, k) + features_inner(f2, f2, k)
    return max(d2, 0.0)


def varifold_dist(s1, s2, k) -> float:
    return float(np.sqrt(varifold_dist_sq(s1, s2, k)))


def _feature_grads(f1: CellFeatures, f2: CellFeatures, k: VarifoldKernel, scale: float):
    """Gradient of scale * <mu1, mu2> w.r.t. f1's barycenters, orientations, measures."""
    diff = f1.barycenters[:, None, :] - f2.barycenters[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    rho, drho = kernels.rho_and_derivative(k.spatial, r2)
    cos = f1.orientations @ f2.orientations.T
    gam = kernels.gamma(k.spherical, cos)
    dgam = kernels.d_gamma(k.spherical, cos)
    mm = np.outer(f1.measures, f2.measures)
    g_b = scale * 2.0 * np.einsum("ij,ijk->ik", drho * gam * mm, diff)
    g_t = scale * (rho * dgam * mm) @ f2.orientations
    g_m = scale * (rho * gam) @ f2.measures
    return g_b, g_t, g_m


def _pullback(vertices, simplices, f: CellFeatures, g_b, g_t, g_m):
    """Chain feature gradients back to vertex positions."""
    grad = np.zeros_like(vertices, dtype=float)
    t = f.orientations
    if simplices.shape[1] == 2:
        m = f.measures
        g_e = (g_t - np.sum(g_t * t, axis=1, keepdims=True) * t) / m[:, None] + g_m[:, None] * t
        np.add.at(grad, simplices[:, 1], g_e + 0.5 * g_b)
        np.add.at(grad, simplices[:, 0], -g_e + 0.5 * g_b)
        return grad
    nn = 2.0 * f.measures
    g_n = (g_t - np.sum(g_t * t, axis=1, keepdims=True) * t) / nn[:, None] + 0.5 * g_m[:, None] * t
    q = vertices
    e1 = q[simplices[:, 1]] - q[simplices[:, 0]]
    e2 = q[simplices[:, 2]] - q[simplices[:, 0]]
    g_e1 = np.cross(e2, g_n)
    g_e2 = np.cross(g_n, e1)
    third = g_b / 3.0
    np.add.at(grad, simplices[:, 1], g_e1 + third)
    np.add.at(grad, simplices[:, 2], g_e2 + third)
    np.add.at(grad, simplices[:, 0], -g_e1 - g_e2 + third)
    return grad


class VarifoldTarget:
    """A fixed target shape with its self inner product cached.

    ``dist_sq_and_grad`` is the hot path used by the matching solvers, taking raw
    vertex arrays that share the source connectivity.
    """

    def __init__(self, target: SimplicialShape, k: VarifoldKernel):
        self.shape = target
        self.kernel = k
        self.features = cell_features(target)
        self.self_inner = features_inner(self.features, self.features, k)

    def dist_sq(self, vertices, simplices) -> float:
        f1 = features_from_arrays(vertices, simplices)
        d2 = (
            features_inner(f1, f1, self.kernel)
            - 2.0 * features_inner(f1, self.features, self.kernel)
            + self.self_inner
        )
        return max(d2, 0.0)

    def dist_sq_and_grad(self, vertices, simplices):
        vertices = np.asarray(vertices, dtype=float)
        f1 = features_from_arrays(vertices, simplices)
        d2 = (
            features_inner(f1, f1, self.kernel)
            - 2.0 * features_inner(f1, self.features, self.kernel)
            + self.self_inner
        )
        # self term counts each pair twice
        gb1, gt1, gm1 = _feature_grads(f1, f1, self.kernel, 2.0)
        gb2, gt2, gm2 = _feature_grads(f1, self.features, self.kernel, -2.0)
        grad = _pullback(vertices, simplices, f1, gb1 + gb2, gt1 + gt2, gm1 + gm2)
        return max(d2, 0.0), grad


def varifold_grad(s1: SimplicialShape, s2: SimplicialShape, k: VarifoldKernel) -> np.ndarray:
    """d varifold_dist_sq(s1, s2) / d s1.vertices, shaped (N_V, d)."""
    _check_pair(s1, s2)
    return VarifoldTarget(s2, k).dist_sq_and_grad(s1.vertices, s1.simplices)[1]
