import numpy as np
import pytest

from geomatch.kernels import (
    DeformationKernel, SpatialProfile, SphericalProfile, d_gamma, d_rho, defkernel_eval,
    defkernel_grad_x, gamma, kernel_matrix, rho,
)


def test_spatial_profiles():
    assert rho(SpatialProfile("gaussian", 0.7), 0.0) == 1.0
    assert rho(SpatialProfile("cauchy", 1.0), 1.0) == pytest.approx(0.5)
    assert rho(SpatialProfile("gaussian", 2.0), 4.0) == pytest.approx(np.exp(-1.0))


@pytest.mark.parametrize("family", ["gaussian", "cauchy"])
def test_d_rho_finite_difference(family):
    p = SpatialProfile(family, 0.8)
    h = 1e-6
    fd = (rho(p, 0.7 + h) - rho(p, 0.7 - h)) / (2 * h)
    assert d_rho(p, 0.7) == pytest.approx(fd, rel=1e-6)


def test_spherical_profiles():
    assert gamma(SphericalProfile("linear", 1.0), 1.0) == 1.0
    for s in (0.3, 1.0, 4.0):
        assert gamma(SphericalProfile("sphere_gaussian", s), 1.0) == pytest.approx(1.0)
    assert gamma(SphericalProfile("sphere_gaussian", np.sqrt(2)), 0.0) == pytest.approx(np.exp(-1.0))
    # odd profile is orientation sensitive
    assert gamma(SphericalProfile("linear", 1.0), -1.0) == -1.0


@pytest.mark.parametrize("family", ["linear", "sphere_gaussian"])
def test_d_gamma_finite_difference(family):
    p = SphericalProfile(family, 0.9)
    h = 1e-6
    for c in (-0.6, 0.1, 0.8):
        fd = (gamma(p, c + h) - gamma(p, c - h)) / (2 * h)
        assert d_gamma(p, c) == pytest.approx(fd, rel=1e-6)


def test_profiles_reject_bad_parameters():
    with pytest.raises(ValueError):
        SpatialProfile("gaussian", 0.0)
    with pytest.raises(ValueError):
        SpatialProfile("laplace", 1.0)
    with pytest.raises(ValueError):
        SphericalProfile("binet", 1.0)
    with pytest.raises(ValueError):
        DeformationKernel(-1.0)


def test_deformation_kernel_values():
    K = DeformationKernel(1.0)
    x = np.array([0.2, -0.4])
    np.testing.assert_allclose(defkernel_eval(K, x, x), np.eye(2))
    np.testing.assert_allclose(defkernel_eval(K, x, x + [1.0, 0.0]), np.exp(-1) * np.eye(2))


def test_deformation_kernel_gradient(rng):
    K = DeformationKernel(0.7)
    x, y = rng.normal(size=3), rng.normal(size=3)
    G = defkernel_grad_x(K, x, y)
    h = 1e-6
    fd = np.stack([(defkernel_eval(K, x + h * e, y) - defkernel_eval(K, x - h * e, y)) / (2 * h)
                   for e in np.eye(3)], axis=-1)
    np.testing.assert_allclose(G, fd, rtol=1e-6, atol=1e-12)


def test_kernel_matrix_is_symmetric_positive_definite(rng):
    q = rng.normal(size=(10, 2))
    k, diff = kernel_matrix(0.5, q)
    np.testing.assert_allclose(k, k.T)
    assert np.all(np.linalg.eigvalsh(k) > 0)
    np.testing.assert_allclose(diff[2, 5], q[2] - q[5])
