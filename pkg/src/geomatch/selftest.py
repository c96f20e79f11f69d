"""Fast invariant suite behind ``geomatch selftest``.

Output is deterministic (fixed seeds, no timings) so two runs can be diffed.
"""
from __future__ import annotations

from itertools import permutations
from typing import Callable

import numpy as np

from . import corpus, gradcheck, lddmm, varifold
from .kernels import SpatialProfile, SphericalProfile

GRAD_TOL = 1e-5


def _gradient_check(name, instances=3):
    def run():
        err = gradcheck.run_suite(name, instances, seed=1)
        return err <= GRAD_TOL, f"worst relative error {err:.2e} (tol {GRAD_TOL:g})"
    return run


def metric_axioms(shapes, kernel, sym_tol=1e-12, tri_slack=1e-10):
    """Worst violations of the pseudo-metric axioms over a list of shapes."""
    n = len(shapes)
    d = np.zeros((n, n))
    self_d = 0.0
    for i in range(n):
        for j in range(n):
            d[i, j] = varifold.varifold_dist(shapes[i], shapes[j], kernel)
        self_d = max(self_d, d[i, i])
    sym = float(np.max(np.abs(d - d.T)))
    tri = 0.0
    for i, j, k in permutations(range(n), 3):
        tri = max(tri, d[i, k] - d[i, j] - d[j, k])
    ok = self_d == 0.0 and sym <= sym_tol and tri <= tri_slack
    return ok, self_d, sym, tri


def _axioms():
    kernel = varifold.VarifoldKernel(SpatialProfile("gaussian", 0.5), SphericalProfile("linear", 1.0))
    worst = [0.0, 0.0, -np.inf]
    ok = True
    for group in (corpus.curve_corpus(), corpus.surface_corpus()):
        good, self_d, sym, tri = metric_axioms(list(group.values()), kernel)
        ok &= good
        worst = [max(worst[0], self_d), max(worst[1], sym), max(worst[2], tri)]
    return ok, f"max d(q,q)={worst[0]:.1e}, asymmetry {worst[1]:.1e}, triangle excess {worst[2]:.1e}"


def _landmark_oracle():
    q0, p0 = np.array([[0.3, -0.2]]), np.array([[0.7, 0.4]])
    tr = lddmm.shoot_landmarks(q0, p0, 0.5, 50)
    exact = q0.ravel() + tr.times[:, None] * p0.ravel()
    err = float(np.max(np.abs(tr.states - exact)))
    return err <= 1e-10, f"max deviation from q0 + t p0: {err:.1e}"


def _hamiltonian():
    rng = np.random.default_rng(5)
    q0, p0 = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    tr = lddmm.shoot_landmarks(q0, p0, 1.0, 100)
    h = [lddmm.hamiltonian(x.reshape(5, 2), p.reshape(5, 2), 1.0) for x, p in zip(tr.states, tr.costates)]
    drift = abs(h[-1] - h[0]) / abs(h[0])
    return drift <= 1e-6, f"relative drift {drift:.1e}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "varifold_gradient": _gradient_check("varifold_grad"),
    "path_energy_gradient": _gradient_check("path_energy_grad"),
    "trajectory_gradient": _gradient_check("trajectory_objective_grad"),
    "shooting_gradient": _gradient_check("shoot_objective_grad"),
    "hybrid_gradient": _gradient_check("hybrid_lagrangian_grad"),
    "metric_axioms": _axioms,
    "landmark_shooting_oracle": _landmark_oracle,
    "hamiltonian_conservation": _hamiltonian,
}


def run_selftest(out) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    print("selftest " + ("passed" if all_ok else "FAILED"), file=out)
    return all_ok
