"""Model dispatch for a single matching run."""
from __future__ import annotations

from .config import MatchConfig
from .errors import DimensionMismatch, KindMismatch
from .matching import MatchResult
from .shapes import SimplicialShape


def check_pair(q0: SimplicialShape, q1: SimplicialShape):
    if q0.kind != q1.kind:
        raise KindMismatch(f"cannot match a {q0.kind} to a {q1.kind}")
    if q0.dim != q1.dim:
        raise DimensionMismatch(f"source is {q0.dim}-D but target is {q1.dim}-D")


def match(q0: SimplicialShape, q1: SimplicialShape, cfg: MatchConfig, progress=None) -> MatchResult:
    """Run the configured model; ``progress(row)`` sees each history row as it is recorded."""
    check_pair(q0, q1)
    if cfg.model == "intrinsic":
        from .intrinsic import match_intrinsic
        return match_intrinsic(q0, q1, cfg, progress)
    if cfg.model == "hybrid":
        from .hybrid import match_hybrid
        return match_hybrid(q0, q1, cfg, progress)
    from .lddmm import match_lddmm
    return match_lddmm(q0, q1, cfg, progress)
