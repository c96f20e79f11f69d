"""Finite-dimensional optimal control: reduced Hamiltonian flows, shooting and
trajectory optimization with discrete-adjoint gradients.

Both objectives differentiate the RK4 scheme itself, so their gradients agree
with finite differences of the discrete cost to rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteState

Array = np.ndarray


@dataclass
class ControlProblem:
    """Callbacks describing  x' = f(x, u),  cost = int L(x, u) dt + U(x(1)).

    ``dynamics_vjp(x, u, lam)`` returns ``(lam^T df/dx, lam^T df/du)`` and
    ``lagrangian_grad(x, u)`` returns ``(dL/dx, dL/du)``. ``endpoint(x)`` returns
    ``(U, grad U)``.

    The reduced-Hamiltonian callbacks are only needed for shooting.
    ``ham_field_vjp(x, p, bx, bp)`` is the vector-Jacobian product of the map
    (x, p) -> (dH/dp, -dH/dx). ``reduced_lagrangian(x, p)`` returns the running
    cost along the flow and its gradient ``(L, dL/dx, dL/dp)``.
    """

    n: int
    dynamics: Optional[Callable] = None
    dynamics_vjp: Optional[Callable] = None
    lagrangian: Optional[Callable] = None
    lagrangian_grad: Optional[Callable] = None
    endpoint: Optional[Callable] = None
    hamiltonian: Optional[Callable] = None
    ham_dx: Optional[Callable] = None
    ham_dp: Optional[Callable] = None
    ham_field: Optional[Callable] = None
    ham_field_vjp: Optional[Callable] = None
    reduced_lagrangian: Optional[Callable] = None

    def field(self, x, p):
        if self.ham_field is not None:
            return self.ham_field(x, p)
        return self.ham_dp(x, p), -self.ham_dx(x, p)

    def endpoint_cost(self, x):
        if self.endpoint is None:
            return 0.0, np.zeros_like(x)
        U, g = self.endpoint(x)
        return float(U), np.asarray(g, dtype=float)


@dataclass
class Trajectory:
    times: Array
    states: Array
    costates: Optional[Array] = None
    running_cost: float = 0.0


def _check_finite(step, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(step)


def _time_grid(steps):
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return np.linspace(0.0, 1.0, steps + 1)


def _rk4_reduced(problem, x, p, h):
    """One RK4 step of the Hamiltonian system; returns the new point and stage inputs."""
    stages = []
    kx1, kp1 = problem.field(x, p)
    stages.append((x, p))
    y2 = (x + 0.5 * h * kx1, p + 0.5 * h * kp1)
    kx2, kp2 = problem.field(*y2)
    stages.append(y2)
    y3 = (x + 0.5 * h * kx2, p + 0.5 * h * kp2)
    kx3, kp3 = problem.field(*y3)
    stages.append(y3)
    y4 = (x + h * kx3, p + h * kp3)
    kx4, kp4 = problem.field(*y4)
    stages.append(y4)
    xn = x + h / 6.0 * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
    pn = p + h / 6.0 * (kp1 + 2 * kp2 + 2 * kp3 + kp4)
    return xn, pn, stages


def _trapezoid_weights(steps):
    w = np.full(steps + 1, 1.0 / steps)
    w[0] = w[-1] = 0.5 / steps
    return w


def _flow(problem, x0, p0, steps):
    h = 1.0 / steps
    xs = np.empty((steps + 1, problem.n))
    ps = np.empty((steps + 1, problem.n))
    xs[0], ps[0] = x0, p0
    _check_finite(0, xs[0], ps[0])
    all_stages = []
    for k in range(steps):
        xs[k + 1], ps[k + 1], stages = _rk4_reduced(problem, xs[k], ps[k], h)
        _check_finite(k + 1, xs[k + 1], ps[k + 1])
        all_stages.append(stages)
    return xs, ps, all_stages


def integrate_reduced(problem: ControlProblem, x0, p0, steps: int) -> Trajectory:
    """RK4 integration of x' = dH/dp, p' = -dH/dx on a uniform grid."""
    times = _time_grid(steps)
    xs, ps, _ = _flow(problem, np.asarray(x0, float), np.asarray(p0, float), steps)
    cost = 0.0
    if problem.reduced_lagrangian is not None:
        w = _trapezoid_weights(steps)
        cost = float(sum(w[k] * problem.reduced_lagrangian(xs[k], ps[k])[0] for k in range(steps + 1)))
    return Trajectory(times, xs, ps, cost)


def shoot_objective(problem: ControlProblem, x0, p0, steps: int, return_trajectory=False):
    """Cost of the reduced flow from (x0, p0) and its exact gradient in p0.

    cost = trapezoid(L_red along the flow) + U(x(1)).
    """
    times = _time_grid(steps)
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    xs, ps, all_stages = _flow(problem, x0, p0, steps)
    w = _trapezoid_weights(steps)
    run = 0.0
    run_grads = []
    for k in range(steps + 1):
        L, gx, gp = problem.reduced_lagrangian(xs[k], ps[k])
        run += w[k] * L
        run_grads.append((w[k] * np.asarray(gx), w[k] * np.asarray(gp)))
    U, gU = problem.endpoint_cost(xs[-1])
    cost = run + U

    h = 1.0 / steps
    lx = run_grads[-1][0] + gU
    lp = run_grads[-1][1].copy()
    for k in range(steps - 1, -1, -1):
        lx, lp = _rk4_reduced_vjp(problem, all_stages[k], h, lx, lp)
        lx = lx + run_grads[k][0]
        lp = lp + run_grads[k][1]
    if return_trajectory:
        return cost, lp, Trajectory(times, xs, ps, float(run))
    return cost, lp


def _rk4_reduced_vjp(problem, stages, h, bx, bp):
    """Pull (bx, bp) back through one RK4 step of the reduced field."""
    vjp = problem.ham_field_vjp
    (y1, y2, y3, y4) = stages
    gx, gp = bx.copy(), bp.copy()
    k4x, k4p = h / 6.0 * bx, h / 6.0 * bp
    k3x, k3p = h / 3.0 * bx, h / 3.0 * bp
    k2x, k2p = h / 3.0 * bx, h / 3.0 * bp
    k1x, k1p = h / 6.0 * bx, h / 6.0 * bp

    ax, ap = vjp(*y4, k4x, k4p)
    gx += ax
    gp += ap
    k3x = k3x + h * ax
    k3p = k3p + h * ap

    ax, ap = vjp(*y3, k3x, k3p)
    gx += ax
    gp += ap
    k2x = k2x + 0.5 * h * ax
    k2p = k2p + 0.5 * h * ap

    ax, ap = vjp(*y2, k2x, k2p)
    gx += ax
    gp += ap
    k1x = k1x + 0.5 * h * ax
    k1p = k1p + 0.5 * h * ap

    ax, ap = vjp(*y1, k1x, k1p)
    gx += ax
    gp += ap
    return gx, gp


def _rk4_controlled(problem, x, u, h):
    f = problem.dynamics
    k1 = f(x, u)
    y2 = x + 0.5 * h * k1
    k2 = f(y2, u)
    y3 = x + 0.5 * h * k2
    k3 = f(y3, u)
    y4 = x + h * k3
    k4 = f(y4, u)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), (x, y2, y3, y4)


def rollout(problem: ControlProblem, x0, controls) -> Array:
    """States at the N_t + 1 grid times under piecewise-constant controls."""
    controls = np.asarray(controls, float)
    steps = len(controls)
    h = 1.0 / steps
    xs = np.empty((steps + 1, problem.n))
    xs[0] = x0
    for k in range(steps):
        xs[k + 1], _ = _rk4_controlled(problem, xs[k], controls[k], h)
        _check_finite(k + 1, xs[k + 1])
    return xs


def trajectory_objective(problem: ControlProblem, x0, controls, steps: int | None = None,
                         return_states=False):
    """cost = sum_k L(x_k, u_k) / N_t + U(x_N) with its gradient in the controls."""
    controls = np.asarray(controls, float)
    if steps is None:
        steps = len(controls)
    if len(controls) != steps:
        raise ValueError(f"expected {steps} control samples, got {len(controls)}")
    h = 1.0 / steps
    xs = np.empty((steps + 1, problem.n))
    xs[0] = np.asarray(x0, float)
    _check_finite(0, xs[0])
    all_stages = []
    for k in range(steps):
        xs[k + 1], stages = _rk4_controlled(problem, xs[k], controls[k], h)
        _check_finite(k + 1, xs[k + 1])
        all_stages.append(stages)

    run = 0.0
    grad_u = np.zeros_like(controls)
    grad_x_run = []
    for k in range(steps):
        L = problem.lagrangian(xs[k], controls[k])
        run += h * L
        gx, gu = problem.lagrangian_grad(xs[k], controls[k])
        grad_x_run.append(h * np.asarray(gx))
        grad_u[k] += h * np.asarray(gu)
    U, gU = problem.endpoint_cost(xs[-1])
    cost = run + U

    vjp = problem.dynamics_vjp
    lam = gU
    for k in range(steps - 1, -1, -1):
        u = controls[k]
        y1, y2, y3, y4 = all_stages[k]
        gx = lam.copy()
        gu = np.zeros_like(u)
        b4 = h / 6.0 * lam
        b3 = h / 3.0 * lam
        b2 = h / 3.0 * lam
        b1 = h / 6.0 * lam
        ax, au = vjp(y4, u, b4)
        gx += ax
        gu += au
        b3 = b3 + h * ax
        ax, au = vjp(y3, u, b3)
        gx += ax
        gu += au
        b2 = b2 + 0.5 * h * ax
        ax, au = vjp(y2, u, b2)
        gx += ax
        gu += au
        b1 = b1 + 0.5 * h * ax
        ax, au = vjp(y1, u, b1)
        gx += ax
        gu += au
        grad_u[k] += gu
        lam = gx + grad_x_run[k]
    if return_states:
        return cost, grad_u, xs, float(run)
    return cost, grad_u
