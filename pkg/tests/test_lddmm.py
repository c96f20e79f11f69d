import numpy as np
import pytest

from geomatch import ocontrol
from geomatch.config import MatchConfig
from geomatch.corpus import circle, ellipse, icosphere
from geomatch.errors import DimensionMismatch, KindMismatch
from geomatch.gradcheck import central_difference, relative_error
from geomatch.kernels import DeformationKernel
from geomatch.lddmm import (
    flow_problem, hamiltonian, lagrangian_and_grad, lddmm_lagrangian, lddmm_velocity, match_lddmm,
    outer_running_cost, shoot_landmarks, velocity_vjp,
)
from geomatch.shapes import polyline
from geomatch.varifold import VarifoldKernel, VarifoldTarget
from geomatch.kernels import SpatialProfile, SphericalProfile

K = DeformationKernel(0.7)


def test_zero_momentum_gives_zero_velocity_and_cost(rng):
    q = rng.normal(size=(6, 2))
    a = np.zeros_like(q)
    assert np.all(lddmm_velocity(q, a, K) == 0)
    assert lddmm_lagrangian(q, a, K) == 0


def test_single_vertex():
    q, a = np.array([[0.3, 0.1]]), np.array([[1.5, -2.0]])
    np.testing.assert_array_equal(lddmm_velocity(q, a, K), a)
    assert lddmm_lagrangian(q, a, K) == pytest.approx(6.25, rel=1e-15)


def test_far_apart_vertices_barely_interact():
    q = np.array([[0.0, 0.0], [5.0, 0.0]])
    a = np.array([[1.0, 2.0], [-3.0, 0.5]])
    v = lddmm_velocity(q, a, K)
    bound = np.exp(-25.0 / K.sigma**2) * np.linalg.norm(a[1])
    assert np.linalg.norm(v[0] - a[0]) <= bound * (1 + 1e-12)


def test_coincident_vertices():
    e = np.array([0.6, -0.8])
    q = np.array([[1.0, 2.0], [1.0, 2.0]])
    a = np.array([e, e])
    assert lddmm_lagrangian(q, a, K) == pytest.approx(4 * e @ e, rel=1e-14)


def test_gaussian_velocity_formula(rng):
    q, a = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    ref = np.array([sum(np.exp(-np.sum((q[i] - q[j]) ** 2) / K.sigma**2) * a[j] for j in range(5))
                    for i in range(5)])
    np.testing.assert_allclose(lddmm_velocity(q, a, K), ref, rtol=1e-13, atol=1e-14)


def test_lagrangian_nonnegative(rng):
    for _ in range(50):
        q = rng.normal(scale=0.3, size=(7, 2))
        a = rng.normal(size=(7, 2))
        assert lddmm_lagrangian(q, a, K) >= 0


def test_lagrangian_and_velocity_gradients(rng):
    q, a, lam = rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    L, gq, ga = lagrangian_and_grad(q, a, 0.8)
    assert relative_error(gq, central_difference(lambda x: lagrangian_and_grad(x.reshape(5, 2), a, 0.8)[0],
                                                 q.ravel())) < 1e-7
    assert relative_error(ga, central_difference(lambda x: lagrangian_and_grad(q, x.reshape(5, 2), 0.8)[0],
                                                 a.ravel())) < 1e-7
    vq, va = velocity_vjp(q, a, lam, 0.8)

    def pairing(x, y):
        return float(np.sum(lam * lddmm_velocity(x, y, 0.8)))

    assert relative_error(vq, central_difference(lambda x: pairing(x.reshape(5, 2), a), q.ravel())) < 1e-7
    assert relative_error(va, central_difference(lambda x: pairing(q, x.reshape(5, 2)), a.ravel())) < 1e-7


def test_zero_momentum_is_a_fixed_point():
    q0 = circle(12)
    target = VarifoldTarget(ellipse(12), VarifoldKernel(SpatialProfile("gaussian", 0.5),
                                                         SphericalProfile("linear", 1.0)))
    problem = flow_problem(q0, target, 10.0, 0.8, outer_running_cost(0.8))
    xs = ocontrol.rollout(problem, q0.vertices.ravel(), np.zeros((10, q0.vertices.size)))
    assert np.all(xs == q0.vertices.ravel())


def test_single_landmark_moves_in_a_straight_line():
    q0, p0 = np.array([[0.3, -0.2]]), np.array([[0.7, 0.4]])
    tr = shoot_landmarks(q0, p0, 0.5, 50)
    np.testing.assert_allclose(tr.states, q0.ravel() + tr.times[:, None] * p0.ravel(), atol=1e-10, rtol=0)
    np.testing.assert_allclose(tr.costates, np.broadcast_to(p0.ravel(), tr.costates.shape), atol=1e-10, rtol=0)


def test_hamiltonian_is_conserved():
    rng = np.random.default_rng(5)
    q0, p0 = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    tr = shoot_landmarks(q0, p0, 1.0, 100)
    h = [hamiltonian(x.reshape(5, 2), p.reshape(5, 2), 1.0) for x, p in zip(tr.states, tr.costates)]
    assert abs(h[-1] - h[0]) / abs(h[0]) <= 1e-6


@pytest.mark.parametrize("solver", ["trajectory", "shooting"])
def test_identical_shapes_need_no_deformation(solver):
    q = circle(16)
    r = match_lddmm(q, q, MatchConfig(solver=solver))
    assert r.energy <= 1e-8 and r.fidelity <= 1e-8
    assert r.iterations == 0


def test_circle_to_translated_circle():
    q0, q1 = circle(), circle(center=(0.8, 0.3))
    r = match_lddmm(q0, q1, MatchConfig())
    assert r.fidelity_reduction >= 0.95
    assert r.arrays["states"].shape == (11, 32, 2)
    assert r.arrays["momenta"].shape == (10, 32, 2)
    for f in r.frames([0.0, 0.5, 1.0]):
        np.testing.assert_array_equal(f.simplices, q0.simplices)
        assert f.closed == q0.closed
    np.testing.assert_array_equal(r.frame_at(0.0).vertices, q0.vertices)
    np.testing.assert_array_equal(r.frame_at(1.0).vertices, r.arrays["states"][-1])


SEGMENTS = (polyline([[0.0, 0.0], [1.0, 0.0]]), polyline([[0.3, 0.4], [1.2, 0.7]]))


@pytest.mark.parametrize("solver", ["trajectory", "shooting"])
@pytest.mark.parametrize("pair", ["segments", "octagons"])
def test_translation_equivariance(solver, pair):
    q0, q1 = SEGMENTS if pair == "segments" else (circle(8), ellipse(8))
    c = np.array([3.0, -1.5])
    cfg = MatchConfig(solver=solver, time_steps=10, kernel_sigma=1.0, varifold={"spatial_sigma": 0.5})
    r0 = match_lddmm(q0, q1, cfg)
    r1 = match_lddmm(q0.with_vertices(q0.vertices + c), q1.with_vertices(q1.vertices + c), cfg)
    assert abs(r1.energy - r0.energy) <= 1e-6 * max(1.0, r0.energy)


def test_shooting_outputs():
    q0, q1 = circle(12), ellipse(12)
    r = match_lddmm(q0, q1, MatchConfig(solver="shooting", time_steps=20, kernel_sigma=1.0))
    assert r.solver == "shooting"
    assert r.arrays["p0"].shape == (12, 2)
    assert r.arrays["states"].shape == (21, 12, 2)
    assert r.extra["hamiltonian_drift"] <= 1e-6
    assert r.fidelity < r.initial_fidelity


def test_conditioning_warning():
    q = polyline([[0.0, 0.0], [1e-12, 0.0], [1.0, 0.0]])
    r = match_lddmm(q, q, MatchConfig(kernel_sigma=1.0))
    assert "warnings" in r.extra


def test_mismatched_inputs():
    with pytest.raises(KindMismatch):
        match_lddmm(polyline(np.eye(3)), icosphere(0), MatchConfig())
    with pytest.raises(DimensionMismatch):
        match_lddmm(circle(), polyline(np.eye(3)), MatchConfig())
