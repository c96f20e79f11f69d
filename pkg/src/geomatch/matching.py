"""Shared result container and iteration bookkeeping for the matching solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .shapes import SimplicialShape


@dataclass
class MatchResult:
    model: str
    solver: str
    energy: float
    fidelity: float
    total: float
    initial_fidelity: float
    status: str
    iterations: int
    history: list[dict]
    frame_at: Callable[[float], SimplicialShape]
    # model-specific arrays (states, controls, p0, spline control net, ...)
    arrays: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def fidelity_reduction(self) -> float:
        if self.initial_fidelity <= 0:
            return 1.0
        return 1.0 - self.fidelity / self.initial_fidelity

    def frames(self, times) -> list[SimplicialShape]:
        return [self.frame_at(float(t)) for t in times]

    def report(self) -> dict:
        out = {
            "model": self.model,
            "solver": self.solver,
            "energy": self.energy,
            "fidelity": self.fidelity,
            "total": self.total,
            "initial_fidelity": self.initial_fidelity,
            "fidelity_reduction": self.fidelity_reduction,
            "status": self.status,
            "iterations": self.iterations,
        }
        out.update(self.extra)
        return out


class History:
    """Records objective components at every accepted optimizer iterate.

    The objective wrapper stores the components of its most recent evaluation;
    the line search always accepts the last point it evaluated, so the callback
    can read them without recomputation.
    """

    def __init__(self, columns, progress: Optional[Callable[[dict], None]] = None):
        self.columns = list(columns)
        self.progress = progress
        self.rows: list[dict] = []
        self._last_x: Optional[np.ndarray] = None
        self._last: Optional[dict] = None
        self.recompute: Optional[Callable[[np.ndarray], dict]] = None

    def stash(self, x, components: dict):
        self._last_x = np.array(x, copy=True)
        self._last = components

    def callback(self, it, x, f):
        if self._last_x is None or not np.array_equal(x, self._last_x):
            comps = self.recompute(x)
        else:
            comps = self._last
        row = {"iter": it}
        row.update({c: float(comps[c]) for c in self.columns})
        self.rows.append(row)
        if self.progress is not None:
            self.progress(row)
