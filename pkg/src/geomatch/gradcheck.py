"""Randomized finite-difference checks of every analytic gradient in the package.

Each ``*_case(rng)`` builds a small random instance and returns
``(f, grad, x)``: a scalar function of a flat vector, its claimed gradient and
the evaluation point. Module functions are looked up through their modules at
call time so that patched implementations are the ones being checked.
"""
from __future__ import annotations

import numpy as np

from . import hybrid, intrinsic, lddmm, ocontrol, varifold
from .kernels import SpatialProfile, SphericalProfile
from .shapes import SimplicialShape, polyline

FD_STEP = 1e-6


def central_difference(f, x, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def relative_error(g, g_ref) -> float:
    num = np.linalg.norm(np.ravel(g) - np.ravel(g_ref))
    den = max(np.linalg.norm(g), np.linalg.norm(g_ref), 1e-12)
    return float(num / den)


def check_case(case) -> float:
    f, grad, x = case
    return relative_error(grad(x), central_difference(f, x))


def random_closed_curve(rng, n=8, center=(0.0, 0.0), radius=1.0):
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    t += np.arange(n) * 1e-2  # keep vertices apart
    r = radius * (1.0 + 0.2 * rng.uniform(-1, 1, n))
    return polyline(np.column_stack([r * np.cos(t), r * np.sin(t)]) + center, closed=True)


def random_surface(rng, n=5):
    """Small open triangulated patch z = f(x, y) with jittered vertices."""
    u, v = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n), indexing="ij")
    pts = np.column_stack([u.ravel(), v.ravel(), 0.2 * rng.normal(size=u.size)])
    pts[:, :2] += 0.05 * rng.uniform(-1, 1, (u.size, 2))
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b = i * n + j, (i + 1) * n + j
            tris += [[a, b, b + 1], [a, b + 1, a + 1]]
    return SimplicialShape(pts, np.array(tris), "surface")


def random_varifold_kernel(rng, scale=1.0):
    spatial = SpatialProfile(str(rng.choice(["gaussian", "cauchy"])), scale * rng.uniform(0.5, 1.5))
    spherical = SphericalProfile(str(rng.choice(["linear", "sphere_gaussian"])), rng.uniform(0.5, 1.5))
    return varifold.VarifoldKernel(spatial, spherical)


def varifold_case(rng, surface=False):
    if surface:
        s1, s2 = random_surface(rng), random_surface(rng)
    else:
        s1 = random_closed_curve(rng)
        s2 = random_closed_curve(rng, center=rng.normal(scale=0.3, size=2))
    k = random_varifold_kernel(rng)
    shape = s1.vertices.shape

    def f(x):
        return varifold.varifold_dist_sq(s1.with_vertices(x.reshape(shape)), s2, k)

    def grad(x):
        return varifold.varifold_grad(s1.with_vertices(x.reshape(shape)), s2, k).ravel()

    return f, grad, s1.vertices.ravel()


def path_energy_case(rng, closed=True):
    n_t, n_th = 4, 8
    base = intrinsic.SplineBasis1D(n_th, 4, closed, 0.0, intrinsic.TWO_PI)
    th = np.linspace(0, 2 * np.pi, n_th, endpoint=not closed)
    ring = np.column_stack([np.cos(th), np.sin(th)])
    ctrl = ring[None] * (1 + 0.3 * np.arange(n_t)[:, None, None]) + 0.1 * rng.normal(size=(n_t, n_th, 2))
    coeffs = intrinsic.SobolevCoeffs(*rng.uniform(0.2, 1.5, 3))
    path = intrinsic.SplinePath(ctrl, 3, base.order, closed)
    shape = ctrl.shape

    def f(x):
        return intrinsic.path_energy(path.with_ctrl(x.reshape(shape)), coeffs)[0]

    def grad(x):
        return intrinsic.path_energy(path.with_ctrl(x.reshape(shape)), coeffs)[1].ravel()

    return f, grad, ctrl.ravel()


def _flow_setup(rng, n=6):
    q0 = random_closed_curve(rng, n)
    q1 = random_closed_curve(rng, n, center=rng.normal(scale=0.3, size=2))
    target = varifold.VarifoldTarget(q1, random_varifold_kernel(rng))
    sigma = rng.uniform(0.5, 1.5)
    return q0, target, sigma


def trajectory_case(rng, steps=4):
    q0, target, sigma = _flow_setup(rng)
    running = lddmm.outer_running_cost(sigma)
    problem = lddmm.flow_problem(q0, target, 10.0, sigma, running)
    x0 = q0.vertices.ravel()
    u0 = 0.3 * rng.normal(size=steps * x0.size)

    def f(u):
        return ocontrol.trajectory_objective(problem, x0, u.reshape(steps, -1))[0]

    def grad(u):
        return ocontrol.trajectory_objective(problem, x0, u.reshape(steps, -1))[1].ravel()

    return f, grad, u0


def shooting_case(rng, steps=8):
    q0, target, sigma = _flow_setup(rng)
    problem = lddmm.shooting_problem(q0, target, 10.0, sigma)
    x0 = q0.vertices.ravel()
    p0 = 0.3 * rng.normal(size=x0.size)

    def f(p):
        return ocontrol.shoot_objective(problem, x0, p, steps)[0]

    def grad(p):
        return ocontrol.shoot_objective(problem, x0, p, steps)[1]

    return f, grad, p0


def hybrid_case(rng, surface=False, variant="full"):
    s = random_surface(rng, 4) if surface else random_closed_curve(rng)
    sigma = rng.uniform(0.3, 1.0)
    stiff = hybrid.IntrinsicStiffness(rng.uniform(0.5, 2.0), variant)
    shape = s.vertices.shape
    n = s.vertices.size
    a = rng.normal(size=n)

    def f(z):
        return hybrid.hybrid_lagrangian_and_grad(z[:n].reshape(shape), s.simplices,
                                                 z[n:].reshape(shape), sigma, stiff)[0]

    def grad(z):
        _, gq, ga, _, _ = hybrid.hybrid_lagrangian_and_grad(z[:n].reshape(shape), s.simplices,
                                                            z[n:].reshape(shape), sigma, stiff)
        return np.concatenate([gq.ravel(), ga.ravel()])

    return f, grad, np.concatenate([s.vertices.ravel(), a])


CASES = {
    "varifold_grad": lambda rng, i: varifold_case(rng, surface=i % 2 == 1),
    "path_energy_grad": lambda rng, i: path_energy_case(rng, closed=i % 2 == 0),
    "trajectory_objective_grad": lambda rng, i: trajectory_case(rng),
    "shoot_objective_grad": lambda rng, i: shooting_case(rng),
    "hybrid_lagrangian_grad": lambda rng, i: hybrid_case(
        rng, surface=i % 3 == 2, variant="tangential" if i % 3 == 1 else "full"),
}


def run_suite(name, instances, seed=0) -> float:
    """Worst relative error of the named gradient over randomized instances."""
    rng = np.random.default_rng(seed)
    return max(check_case(CASES[name](rng, i)) for i in range(instances))
