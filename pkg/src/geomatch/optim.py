"""L-BFGS with a strong-Wolfe line search.

The line search follows the bracketing/zoom scheme of Nocedal & Wright
(Algorithms 3.5 and 3.6) with safeguarded cubic interpolation. Objective
evaluations that raise :class:`~geomatch.errors.DomainError` or return a
non-finite value are treated as +inf, which shrinks the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NonFiniteObjective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimOptions:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.max_ls < 1:
            raise ValueError("max_ls must be >= 1")


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    status: str  # converged | max_iters | line_search_failed
    iterations: int
    history: list = field(default_factory=list)  # (iter, f, |g|_inf)
    n_evals: int = 0


class _Counted:
    def __init__(self, fun):
        self.fun = fun
        self.n = 0

    def __call__(self, x):
        self.n += 1
        try:
            f, g = self.fun(x)
        except DomainError as exc:
            log.debug("trial point outside domain: %s", exc)
            return np.inf, None
        f = float(f)
        if not np.isfinite(f):
            return np.inf, None
        g = np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            return np.inf, None
        return f, g


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    if a == b:
        return None
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (gb + d2 - d1) / denom
    return x if np.isfinite(x) else None


def _interpolate(lo, hi):
    a, fa, ga = lo
    b, fb, gb = hi
    left, right = min(a, b), max(a, b)
    width = right - left
    trial = None
    if np.isfinite(fb) and gb is not None:
        trial = _cubic_min(a, fa, ga, b, fb, gb)
    if trial is None or not (left + 0.1 * width <= trial <= right - 0.1 * width):
        trial = 0.5 * (a + b)
    return trial


def wolfe_line_search(fun, x, f0, g0, d, alpha0, opts: OptimOptions):
    """Return (alpha, f, g) satisfying the strong Wolfe conditions, or None."""
    dphi0 = float(g0 @ d)
    if not dphi0 < 0:
        return None
    c1, c2 = opts.c1, opts.c2

    def phi(alpha):
        f, g = fun(x + alpha * d)
        return f, g, (float(g @ d) if g is not None else None)

    def accept(alpha, f, g, dphi):
        assert f <= f0 + c1 * alpha * dphi0 and abs(dphi) <= -c2 * dphi0
        return alpha, f, g

    def zoom(lo, hi, trials):
        # lo = (alpha, f, dphi, g) with sufficient decrease; hi brackets a minimizer
        while trials < opts.max_ls:
            if abs(hi[0] - lo[0]) <= 1e-16 * max(1.0, abs(lo[0])):
                break
            alpha = _interpolate(lo[:3], hi[:3])
            f, g, dphi = phi(alpha)
            trials += 1
            if not np.isfinite(f) or f > f0 + c1 * alpha * dphi0 or f >= lo[1]:
                hi = (alpha, f, dphi, g)
                continue
            if abs(dphi) <= -c2 * dphi0:
                return accept(alpha, f, g, dphi)
            if dphi * (hi[0] - lo[0]) >= 0:
                hi = lo
            lo = (alpha, f, dphi, g)
        return None

    prev = (0.0, f0, dphi0, g0)
    alpha = alpha0
    for trials in range(1, opts.max_ls + 1):
        f, g, dphi = phi(alpha)
        if not np.isfinite(f) or f > f0 + c1 * alpha * dphi0 or (trials > 1 and f >= prev[1]):
            return zoom(prev, (alpha, f, dphi, g), trials)
        if abs(dphi) <= -c2 * dphi0:
            return accept(alpha, f, g, dphi)
        if dphi >= 0:
            return zoom((alpha, f, dphi, g), prev, trials)
        prev = (alpha, f, dphi, g)
        alpha = 2.0 * alpha
    return None


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    opts: OptimOptions | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> OptimResult:
    """Minimize a smooth function given as ``x -> (f, grad)``.

    ``callback(iteration, x, f)`` is called at x0 and after every accepted step.
    """
    opts = opts or OptimOptions()
    fun = _Counted(objective)
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f) or g is None:
        raise NonFiniteObjective("objective is not finite at the starting point")

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    history = [(0, f, gnorm)]
    if callback:
        callback(0, x, f)
    status = "max_iters"
    it = 0
    while True:
        if gnorm <= opts.grad_tol * (1.0 + abs(f)):
            status = "converged"
            break
        if it >= opts.max_iters:
            status = "max_iters"
            break
        d = _two_loop(g, s_hist, y_hist)
        if not g @ d < 0:
            # lost descent: restart from steepest descent
            s_hist.clear()
            y_hist.clear()
            d = -g
        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / float(np.linalg.norm(g)))
        found = wolfe_line_search(fun, x, f, g, d, alpha0, opts)
        if found is None:
            status = "line_search_failed"
            break
        alpha, f_new, g_new = found
        s = alpha * d
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        it += 1
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > opts.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        gnorm = float(np.max(np.abs(g)))
        history.append((it, f, gnorm))
        if callback:
            callback(it, x, f)
    return OptimResult(x, f, g, status, it, history, fun.n)
