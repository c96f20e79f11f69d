import numpy as np
import pytest

from geomatch import lddmm, ocontrol
from geomatch.errors import NonFiniteState
from geomatch.gradcheck import central_difference, relative_error
from geomatch.optim import OptimOptions, minimize


def linear_hamiltonian_problem(n):
    """H(x, p) = p . x, so x' = x and p' = -p."""
    return ocontrol.ControlProblem(
        n=n,
        hamiltonian=lambda x, p: float(p @ x),
        ham_dx=lambda x, p: p,
        ham_dp=lambda x, p: x,
    )


def lq_problem(A, z, w):
    """x' = A x + u,  L = |u|^2 / 2,  U = w |x - z|^2 / 2.

    Maximizing p.(Ax + u) - |u|^2/2 gives u = p, so the reduced Hamiltonian is
    p.Ax + |p|^2/2 and the running cost along the flow is |p|^2/2.
    """
    n = len(z)

    def endpoint(x):
        r = x - z
        return 0.5 * w * r @ r, w * r

    def field(x, p):
        return A @ x + p, -A.T @ p

    def field_vjp(x, p, bx, bp):
        return A.T @ bx, bx - A @ bp

    return ocontrol.ControlProblem(
        n=n,
        dynamics=lambda x, u: A @ x + u,
        dynamics_vjp=lambda x, u, lam: (A.T @ lam, lam),
        lagrangian=lambda x, u: 0.5 * u @ u,
        lagrangian_grad=lambda x, u: (np.zeros_like(x), u),
        endpoint=endpoint,
        hamiltonian=lambda x, p: float(p @ A @ x + 0.5 * p @ p),
        ham_field=field,
        ham_field_vjp=field_vjp,
        reduced_lagrangian=lambda x, p: (0.5 * p @ p, np.zeros_like(x), p),
    )


@pytest.fixture
def lq():
    A = np.array([[0.0, 1.0], [-1.0, -0.2]])
    return lq_problem(A, np.array([1.0, 0.5]), 10.0), np.array([0.2, -0.3])


def test_zero_momentum_is_a_fixed_point(rng):
    q0 = rng.normal(size=(4, 2))
    tr = lddmm.shoot_landmarks(q0, np.zeros_like(q0), 0.8, 20)
    assert np.all(tr.states == q0.ravel())
    assert tr.running_cost == 0.0


def test_linear_system_matches_exponentials():
    x0, p0 = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    tr = ocontrol.integrate_reduced(linear_hamiltonian_problem(2), x0, p0, 100)
    np.testing.assert_allclose(tr.states[-1], x0 * np.e, atol=1e-8)
    np.testing.assert_allclose(tr.costates[-1], p0 / np.e, atol=1e-8)


def test_hamiltonian_drift_five_landmarks(rng):
    q0, p0 = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    tr = lddmm.shoot_landmarks(q0, p0, 1.0, 100)
    h = [lddmm.hamiltonian(x.reshape(5, 2), p.reshape(5, 2), 1.0) for x, p in zip(tr.states, tr.costates)]
    assert abs(h[-1] - h[0]) / (1 + abs(h[0])) <= 1e-6


def test_shoot_objective_trivial():
    problem = lddmm.hamiltonian_problem((3, 2), 1.0)
    x0 = np.arange(6.0)
    cost, grad = ocontrol.shoot_objective(problem, x0, np.zeros(6), 10)
    assert cost == 0.0 and np.all(grad == 0.0)


def test_shoot_gradient_three_landmarks(rng):
    problem = lddmm.hamiltonian_problem((3, 2), 0.9)
    z = rng.normal(size=6)
    problem.endpoint = lambda x: (float(np.sum((x - z) ** 2)), 2 * (x - z))
    x0, p0 = rng.normal(size=6), rng.normal(size=6)
    g = ocontrol.shoot_objective(problem, x0, p0, 20)[1]
    fd = central_difference(lambda p: ocontrol.shoot_objective(problem, x0, p, 20)[0], p0)
    assert relative_error(g, fd) <= 1e-5


def test_lq_gradients(lq, rng):
    problem, x0 = lq
    p0 = rng.normal(size=2)
    g = ocontrol.shoot_objective(problem, x0, p0, 10)[1]
    fd = central_difference(lambda p: ocontrol.shoot_objective(problem, x0, p, 10)[0], p0)
    assert relative_error(g, fd) <= 1e-5
    u = rng.normal(size=(10, 2))
    g = ocontrol.trajectory_objective(problem, x0, u)[1]
    fd = central_difference(lambda v: ocontrol.trajectory_objective(problem, x0, v.reshape(10, 2))[0], u.ravel())
    assert relative_error(g.ravel(), fd) <= 1e-5


def test_transversality_at_shooting_optimum(lq):
    problem, x0 = lq
    res = minimize(lambda p: ocontrol.shoot_objective(problem, x0, p, 100), np.zeros(2),
                   OptimOptions(grad_tol=1e-12))
    tr = ocontrol.integrate_reduced(problem, x0, res.x, 100)
    gU = problem.endpoint(tr.states[-1])[1]
    assert np.linalg.norm(tr.costates[-1] + gU) <= 1e-4 * (1 + np.linalg.norm(gU))


def test_shooting_and_trajectory_agree_on_convex_problem(lq):
    # the two discretizations differ by O(1/N^2) at the optimum; N = 400 puts the gap near 5e-7
    problem, x0 = lq
    n = 400
    opts = OptimOptions(grad_tol=1e-12, max_iters=5000)
    shoot = minimize(lambda p: ocontrol.shoot_objective(problem, x0, p, n), np.zeros(2), opts)

    def traj_objective(u):
        cost, grad = ocontrol.trajectory_objective(problem, x0, u.reshape(n, 2))
        return cost, grad.ravel()

    traj = minimize(traj_objective, np.zeros(2 * n), opts)
    assert traj.f == pytest.approx(shoot.f, rel=1e-6)


def test_trajectory_zero_controls_without_endpoint():
    problem = lq_problem(np.eye(2), np.zeros(2), 1.0)
    problem.endpoint = None
    cost, grad = ocontrol.trajectory_objective(problem, np.ones(2), np.zeros((5, 2)))
    assert cost == 0.0 and np.all(grad == 0.0)


def test_trajectory_cost_self_convergence(lq):
    problem, x0 = lq

    def cost(n):
        # the smooth control is held at its mid-cell values
        t = (np.arange(n) + 0.5) / n
        u = np.column_stack([np.sin(2 * t), np.cos(3 * t)])
        return ocontrol.trajectory_objective(problem, x0, u)[0]

    c10, c20, c40 = cost(10), cost(20), cost(40)
    order = np.log2(abs(c10 - c20) / abs(c20 - c40))
    assert order >= 1.0


def test_blow_up_reports_step():
    problem = linear_hamiltonian_problem(1)
    problem.ham_dp = lambda x, p: x ** 3
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFiniteState) as err:
        ocontrol.integrate_reduced(problem, np.array([50.0]), np.array([0.0]), 10)
    assert err.value.step >= 1
