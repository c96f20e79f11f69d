"""Outer (LDDMM) matching of discrete shapes.

Vertices move by a Gaussian kernel flow  q_i' = sum_j k(q_i, q_j) a_j  with
running cost  L(q, a) = a^T K(q) a. The endpoint is relaxed by a weighted
varifold penalty. Two solvers are provided: trajectory optimization over the
time-sampled momenta a(t) and geodesic shooting over p0 with the reduced
Hamiltonian  H(q, p) = 1/2 p^T K(q) p  (energy reported as int p^T K p dt).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import ocontrol
from .config import MatchConfig, bbox_diagonal
from .errors import DimensionMismatch, KindMismatch
from .kernels import DeformationKernel, kernel_matrix
from .matching import History, MatchResult
from .optim import minimize
from .shapes import SimplicialShape
from .varifold import VarifoldTarget

log = logging.getLogger(__name__)


def _as_points(q):
    if isinstance(q, SimplicialShape):
        return q.vertices
    return np.asarray(q, dtype=float)


def _sigma(K):
    return K.sigma if isinstance(K, DeformationKernel) else float(K)


def lddmm_velocity(q, a, K) -> np.ndarray:
    q = _as_points(q)
    k, _ = kernel_matrix(_sigma(K), q)
    return k @ np.asarray(a, dtype=float)


def lddmm_lagrangian(q, a, K) -> float:
    q = _as_points(q)
    a = np.asarray(a, dtype=float)
    k, _ = kernel_matrix(_sigma(K), q)
    return float(np.sum(a * (k @ a)))


def velocity_vjp(q, a, lam, sigma):
    """Gradients of <lam, K(q) a> with respect to q and a."""
    k, diff = kernel_matrix(sigma, q)
    kp = -k / sigma**2
    la = lam @ a.T
    gq = 2.0 * np.einsum("ij,ijk->ik", kp * (la + la.T), diff)
    return gq, k @ lam


def lagrangian_and_grad(q, a, sigma):
    """a^T K(q) a and its gradients (d/dq, d/da)."""
    k, diff = kernel_matrix(sigma, q)
    ka = k @ a
    L = float(np.sum(a * ka))
    kp = -k / sigma**2
    gq = 4.0 * np.einsum("ij,ijk->ik", kp * (a @ a.T), diff)
    return L, gq, 2.0 * ka


def hamiltonian(q, p, sigma) -> float:
    k, _ = kernel_matrix(sigma, q)
    return 0.5 * float(np.sum(p * (k @ p)))


def hamiltonian_grads(q, p, sigma):
    """(dH/dq, dH/dp) for H = 1/2 p^T K(q) p."""
    k, diff = kernel_matrix(sigma, q)
    kp = -k / sigma**2
    dq = 2.0 * np.einsum("ij,ijk->ik", kp * (p @ p.T), diff)
    return dq, k @ p


def hamiltonian_field_vjp(q, p, bq, bp, sigma):
    """VJP of (q, p) -> (dH/dp, -dH/dq) against cotangent (bq, bp)."""
    k, diff = kernel_matrix(sigma, q)
    s2 = sigma**2
    kp = -k / s2
    kpp = k / s2**2
    P = p @ p.T
    # <bq, K p>
    ab = bq @ p.T
    gq_a = 2.0 * np.einsum("ij,ijk->ik", kp * (ab + ab.T), diff)
    gp_a = k @ bq
    # <bp, dH/dq>
    bdiff = bp[:, None, :] - bp[None, :, :]
    bd = np.einsum("ijk,ijk->ij", bdiff, diff)
    gp_b = 2.0 * np.einsum("ij,jk->ik", kp * bd, p)
    w = 2.0 * P * kp
    gq_b = (
        4.0 * np.einsum("ij,ijk->ik", P * kpp * bd, diff)
        + bp * w.sum(axis=1, keepdims=True)
        - w @ bp
    )
    return gq_a - gq_b, gp_a - gp_b


def conditioning_warning(q, sigma):
    q = _as_points(q)
    diff = q[:, None, :] - q[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(r, np.inf)
    if r.size and r.min() < 1e-8 * sigma:
        return f"vertices closer than 1e-8*sigma (min separation {r.min():.3e}); kernel matrix is near singular"
    return None


@dataclass
class RunningCost:
    """Running cost L(q, a) of a kernel flow.

    ``evaluate(q, a)`` returns ``(L, dL/dq, dL/da, parts)`` where ``parts`` is a
    dict of named components summing to L.
    """

    evaluate: Callable
    part_names: tuple = ()


def outer_running_cost(sigma) -> RunningCost:
    def evaluate(q, a):
        L, gq, ga = lagrangian_and_grad(q, a, sigma)
        return L, gq, ga, {}

    return RunningCost(evaluate)


def _check_inputs(q0, q1):
    if q0.dim != q1.dim:
        raise DimensionMismatch(f"ambient dimensions differ: {q0.dim} vs {q1.dim}")
    if q0.kind != q1.kind:
        raise KindMismatch(f"cannot match a {q0.kind} to a {q1.kind}")


def flow_problem(q0: SimplicialShape, target: VarifoldTarget, penalty, sigma, running: RunningCost):
    """ControlProblem on flattened vertex positions (trajectory form)."""
    shape = q0.vertices.shape
    simplices = q0.simplices

    def dynamics(x, u):
        q = x.reshape(shape)
        k, _ = kernel_matrix(sigma, q)
        return (k @ u.reshape(shape)).ravel()

    def dynamics_vjp(x, u, lam):
        gq, ga = velocity_vjp(x.reshape(shape), u.reshape(shape), lam.reshape(shape), sigma)
        return gq.ravel(), ga.ravel()

    def lagrangian(x, u):
        return running.evaluate(x.reshape(shape), u.reshape(shape))[0]

    def lagrangian_grad(x, u):
        _, gq, ga, _ = running.evaluate(x.reshape(shape), u.reshape(shape))
        return gq.ravel(), ga.ravel()

    def endpoint(x):
        d2, g = target.dist_sq_and_grad(x.reshape(shape), simplices)
        return penalty * d2, penalty * g.ravel()

    return ocontrol.ControlProblem(
        n=q0.vertices.size,
        dynamics=dynamics,
        dynamics_vjp=dynamics_vjp,
        lagrangian=lagrangian,
        lagrangian_grad=lagrangian_grad,
        endpoint=endpoint,
    )


def hamiltonian_problem(shape, sigma):
    """ControlProblem with the reduced Hamiltonian H = 1/2 p^T K(q) p and no endpoint term.

    ``shape`` is the (n_points, d) shape of the landmark array.
    """

    def ham(x, p):
        return hamiltonian(x.reshape(shape), p.reshape(shape), sigma)

    def field(x, p):
        dq, dp = hamiltonian_grads(x.reshape(shape), p.reshape(shape), sigma)
        return dp.ravel(), -dq.ravel()

    def field_vjp(x, p, bx, bp):
        gq, gp = hamiltonian_field_vjp(
            x.reshape(shape), p.reshape(shape), bx.reshape(shape), bp.reshape(shape), sigma
        )
        return gq.ravel(), gp.ravel()

    def reduced_lagrangian(x, p):
        q, pp = x.reshape(shape), p.reshape(shape)
        dq, dp = hamiltonian_grads(q, pp, sigma)
        return float(np.sum(pp * dp)), 2.0 * dq.ravel(), 2.0 * dp.ravel()

    return ocontrol.ControlProblem(
        n=int(np.prod(shape)),
        hamiltonian=ham,
        ham_dx=lambda x, p: -field(x, p)[1],
        ham_dp=lambda x, p: field(x, p)[0],
        ham_field=field,
        ham_field_vjp=field_vjp,
        reduced_lagrangian=reduced_lagrangian,
    )


def shooting_problem(q0: SimplicialShape, target: VarifoldTarget, penalty, sigma):
    """Hamiltonian problem on the vertices of q0 with the varifold endpoint penalty."""
    shape = q0.vertices.shape
    simplices = q0.simplices

    def endpoint(x):
        d2, g = target.dist_sq_and_grad(x.reshape(shape), simplices)
        return penalty * d2, penalty * g.ravel()

    return replace(hamiltonian_problem(shape, sigma), endpoint=endpoint)


def shoot_landmarks(q0, p0, sigma, steps) -> ocontrol.Trajectory:
    """Geodesic flow of landmarks q0 (n, d) from initial momentum p0."""
    q0 = np.asarray(q0, dtype=float)
    problem = hamiltonian_problem(q0.shape, sigma)
    return ocontrol.integrate_reduced(problem, q0.ravel(), np.asarray(p0, float).ravel(), steps)


def _partial_rk4(fun, x, h):
    k1 = fun(x)
    k2 = fun(x + 0.5 * h * k1)
    k3 = fun(x + 0.5 * h * k2)
    k4 = fun(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _grid_lookup(t, steps):
    pos = t * steps
    k = min(int(np.floor(pos + 1e-12)), steps)
    return k, (pos - k) / steps


def match_flow(q0: SimplicialShape, q1: SimplicialShape, cfg: MatchConfig, sigma: float,
               running: RunningCost, model: str, progress=None) -> MatchResult:
    """Trajectory-optimization matching with an arbitrary kernel-flow running cost."""
    _check_inputs(q0, q1)
    target = VarifoldTarget(q1, cfg.varifold.kernel(0.25 * bbox_diagonal(q1.vertices)))
    penalty = cfg.penalty
    steps = cfg.steps()
    problem = flow_problem(q0, target, penalty, sigma, running)
    shape = q0.vertices.shape
    x0 = q0.vertices.ravel()
    columns = ["energy", "fidelity", "total", *running.part_names]
    hist = History(columns, progress)

    def components(controls):
        cost, grad, xs, run = ocontrol.trajectory_objective(problem, x0, controls, steps, return_states=True)
        comps = {"energy": run, "fidelity": (cost - run) / penalty, "total": cost}
        if running.part_names:
            per = _split_parts(running, xs, controls, shape, steps)
            for name in running.part_names:
                comps[name] = float(sum(p[name] for p in per)) / steps
        return cost, grad, comps

    def objective(z):
        controls = z.reshape(steps, -1)
        cost, grad, comps = components(controls)
        hist.stash(z, comps)
        return cost, grad.ravel()

    hist.recompute = lambda z: components(z.reshape(steps, -1))[2]
    z0 = np.zeros(steps * q0.vertices.size)
    res = minimize(objective, z0, cfg.optimizer.options(), callback=hist.callback)

    controls = res.x.reshape(steps, -1)
    cost, _, xs, run = ocontrol.trajectory_objective(problem, x0, controls, steps, return_states=True)
    fidelity = (cost - run) / penalty
    states = xs.reshape(steps + 1, *shape)

    def frame_at(t):
        k, dt = _grid_lookup(t, steps)
        x = xs[k]
        if dt > 0 and k < steps:
            u = controls[k]
            x = _partial_rk4(lambda y: problem.dynamics(y, u), x, dt)
        return q0.with_vertices(x.reshape(shape))

    extra = {"time_steps": steps, "kernel_sigma": sigma, "varifold_sigma": target.kernel.spatial.sigma}
    warn = conditioning_warning(q0.vertices, sigma)
    if warn:
        extra["warnings"] = [warn]
    if running.part_names:
        per = _split_parts(running, xs, controls, shape, steps)
        extra["energy_by_step"] = per
        for name in running.part_names:
            extra[name] = float(sum(p[name] for p in per)) / steps
    return MatchResult(
        model=model,
        solver="trajectory",
        energy=run,
        fidelity=fidelity,
        total=cost,
        initial_fidelity=hist.rows[0]["fidelity"],
        status=res.status,
        iterations=res.iterations,
        history=hist.rows,
        frame_at=frame_at,
        arrays={"states": states, "momenta": controls.reshape(steps, *shape)},
        extra=extra,
    )


def _split_parts(running, xs, controls, shape, steps):
    out = []
    for k in range(steps):
        _, _, _, parts = running.evaluate(xs[k].reshape(shape), controls[k].reshape(shape))
        out.append({name: float(parts[name]) for name in running.part_names})
    return out


def match_shooting(q0: SimplicialShape, q1: SimplicialShape, cfg: MatchConfig, sigma: float,
                   progress=None) -> MatchResult:
    _check_inputs(q0, q1)
    target = VarifoldTarget(q1, cfg.varifold.kernel(0.25 * bbox_diagonal(q1.vertices)))
    penalty = cfg.penalty
    steps = cfg.steps()
    problem = shooting_problem(q0, target, penalty, sigma)
    shape = q0.vertices.shape
    x0 = q0.vertices.ravel()
    hist = History(["energy", "fidelity", "total"], progress)

    def components(p0):
        cost, grad, traj = ocontrol.shoot_objective(problem, x0, p0, steps, return_trajectory=True)
        run = traj.running_cost
        return cost, grad, {"energy": run, "fidelity": (cost - run) / penalty, "total": cost}

    def objective(p0):
        cost, grad, comps = components(p0)
        hist.stash(p0, comps)
        return cost, grad

    hist.recompute = lambda p0: components(p0)[2]
    res = minimize(objective, np.zeros(q0.vertices.size), cfg.optimizer.options(), callback=hist.callback)
    cost, _, traj = ocontrol.shoot_objective(problem, x0, res.x, steps, return_trajectory=True)
    run = traj.running_cost
    xs, ps = traj.states, traj.costates

    def frame_at(t):
        k, dt = _grid_lookup(t, steps)
        x, p = xs[k], ps[k]
        if dt > 0 and k < steps:
            z = _partial_rk4(lambda y: np.concatenate(problem.field(y[: len(x)], y[len(x):])),
                             np.concatenate([x, p]), dt)
            x = z[: len(x)]
        return q0.with_vertices(x.reshape(shape))

    h0 = problem.hamiltonian(xs[0], ps[0])
    h1 = problem.hamiltonian(xs[-1], ps[-1])
    extra = {
        "time_steps": steps,
        "kernel_sigma": sigma,
        "varifold_sigma": target.kernel.spatial.sigma,
        "hamiltonian_drift": abs(h1 - h0) / (1.0 + abs(h0)),
    }
    warn = conditioning_warning(q0.vertices, sigma)
    if warn:
        extra["warnings"] = [warn]
    return MatchResult(
        model="lddmm",
        solver="shooting",
        energy=run,
        fidelity=(cost - run) / penalty,
        total=cost,
        initial_fidelity=hist.rows[0]["fidelity"],
        status=res.status,
        iterations=res.iterations,
        history=hist.rows,
        frame_at=frame_at,
        arrays={
            "states": xs.reshape(steps + 1, *shape),
            "costates": ps.reshape(steps + 1, *shape),
            "p0": res.x.reshape(shape),
        },
        extra=extra,
    )


def match_lddmm(q0: SimplicialShape, q1: SimplicialShape, cfg: MatchConfig, progress=None) -> MatchResult:
    sigma = cfg.deformation_sigma(q0.vertices)
    if cfg.solver == "shooting":
        return match_shooting(q0, q1, cfg, sigma, progress)
    return match_flow(q0, q1, cfg, sigma, outer_running_cost(sigma), "lddmm", progress)
