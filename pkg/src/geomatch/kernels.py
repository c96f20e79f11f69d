"""Scalar kernel profiles and the Gaussian deformation kernel.

Spatial profiles are functions of the squared distance ``r2``; spherical
profiles are functions of the cosine between two unit vectors. The spherical
Gaussian uses exp((2/sigma^2)(c - 1)) = exp(-|t - t'|^2 / sigma^2), which is
the positive-definite restriction of a Gaussian to the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpatialProfile:
    family: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "cauchy"):
            raise ValueError(f"unknown spatial profile {self.family!r}")
        if not self.sigma > 0:
            raise ValueError("spatial sigma must be positive")


@dataclass(frozen=True)
class SphericalProfile:
    family: str = "linear"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ("linear", "sphere_gaussian"):
            raise ValueError(f"unknown spherical profile {self.family!r}")
        if not self.sigma > 0:
            raise ValueError("spherical sigma must be positive")


@dataclass(frozen=True)
class DeformationKernel:
    """Scalar Gaussian times the identity matrix."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("kernel sigma must be positive")


def rho(profile: SpatialProfile, r2):
    r2 = np.asarray(r2, dtype=float)
    s2 = profile.sigma**2
    if profile.family == "gaussian":
        return np.exp(-r2 / s2)
    return 1.0 / (1.0 + r2 / s2)


def d_rho(profile: SpatialProfile, r2):
    r2 = np.asarray(r2, dtype=float)
    s2 = profile.sigma**2
    if profile.family == "gaussian":
        return -np.exp(-r2 / s2) / s2
    return -1.0 / (s2 * (1.0 + r2 / s2) ** 2)


def rho_and_derivative(profile: SpatialProfile, r2):
    """(rho, d rho / d r2) sharing the exponential."""
    s2 = profile.sigma**2
    if profile.family == "gaussian":
        val = np.exp(-r2 / s2)
        return val, -val / s2
    val = 1.0 / (1.0 + r2 / s2)
    return val, -(val**2) / s2


def _clamp(c):
    return np.clip(np.asarray(c, dtype=float), -1.0, 1.0)


def gamma(profile: SphericalProfile, c):
    c = _clamp(c)
    if profile.family == "linear":
        return c
    return np.exp((2.0 / profile.sigma**2) * (c - 1.0))


def d_gamma(profile: SphericalProfile, c):
    c = _clamp(c)
    if profile.family == "linear":
        return np.ones_like(c)
    a = 2.0 / profile.sigma**2
    return a * np.exp(a * (c - 1.0))


def gaussian_scalar(sigma, r2):
    return np.exp(-np.asarray(r2, dtype=float) / sigma**2)


def defkernel_eval(K: DeformationKernel, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = float(np.sum((x - y) ** 2))
    return gaussian_scalar(K.sigma, r2) * np.eye(len(x))


def defkernel_grad_x(K: DeformationKernel, x, y) -> np.ndarray:
    """G[a, b, c] = d K(x, y)[a, b] / d x[c]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    k = gaussian_scalar(K.sigma, float(diff @ diff))
    d = len(x)
    return np.eye(d)[:, :, None] * (-2.0 * k / K.sigma**2 * diff)[None, None, :]


def kernel_matrix(sigma, q):
    """Scalar Gaussian Gram matrix k_ij plus the pairwise differences q_i - q_j."""
    diff = q[:, None, :] - q[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.exp(-r2 / sigma**2), diff
