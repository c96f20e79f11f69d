"""Run configuration (JSON), parsed strictly: unknown keys are errors."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .kernels import SpatialProfile, SphericalProfile
from .optim import OptimOptions
from .varifold import VarifoldKernel


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VarifoldConfig(_Strict):
    spatial: Literal["gaussian", "cauchy"] = "gaussian"
    # None: 0.25 x bounding-box diagonal of the target
    spatial_sigma: Optional[float] = Field(default=None, gt=0)
    spherical: Literal["linear", "sphere_gaussian"] = "linear"
    spherical_sigma: float = Field(default=1.0, gt=0)

    def kernel(self, sigma_default: float) -> VarifoldKernel:
        sigma = self.spatial_sigma if self.spatial_sigma is not None else sigma_default
        return VarifoldKernel(
            SpatialProfile(self.spatial, sigma),
            SphericalProfile(self.spherical, self.spherical_sigma),
        )


class SobolevConfig(_Strict):
    a0: float = Field(default=1.0, ge=0)
    a1: float = Field(default=1.0, ge=0)
    a2: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _nonzero(self):
        if self.a0 + self.a1 + self.a2 <= 0:
            raise ValueError("at least one Sobolev coefficient must be positive")
        return self


class SplineConfig(_Strict):
    n_time: int = Field(default=10, ge=2)
    n_theta: int = Field(default=40, ge=4)
    order_time: int = Field(default=3, ge=2)
    order_theta: int = Field(default=4, ge=3)
    quad_time: int = Field(default=3, ge=1)
    quad_theta: int = Field(default=5, ge=1)
    # RMS fit residual tolerance, relative to the source bounding-box diagonal
    fit_tol: float = Field(default=0.05, gt=0)
    # compare against the target after passing it through the same spline fit
    resample_target: bool = True

    @model_validator(mode="after")
    def _orders(self):
        if self.order_time > self.n_time:
            raise ValueError("order_time cannot exceed n_time")
        if self.order_theta > self.n_theta:
            raise ValueError("order_theta cannot exceed n_theta")
        return self


class StiffnessConfig(_Strict):
    weight: float = Field(default=1.0, ge=0)
    variant: Literal["full", "tangential"] = "full"


class OptimizerConfig(_Strict):
    memory: int = Field(default=10, ge=1)
    max_iters: int = Field(default=500, ge=0)
    grad_tol: float = Field(default=1e-6, gt=0)
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = Field(default=40, ge=1)

    @model_validator(mode="after")
    def _wolfe(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        return self

    def options(self) -> OptimOptions:
        return OptimOptions(self.memory, self.max_iters, self.grad_tol, self.c1, self.c2, self.max_ls)


class MatchConfig(_Strict):
    model: Literal["intrinsic", "lddmm", "hybrid"] = "lddmm"
    solver: Literal["trajectory", "shooting"] = "trajectory"
    penalty: float = Field(default=100.0, gt=0)
    varifold: VarifoldConfig = VarifoldConfig()
    sobolev: SobolevConfig = SobolevConfig()
    spline: SplineConfig = SplineConfig()
    # deformation kernel width; None: 0.5 (lddmm) or 0.25 (hybrid) x source bbox diagonal
    kernel_sigma: Optional[float] = Field(default=None, gt=0)
    stiffness: StiffnessConfig = StiffnessConfig()
    # None: 10 for trajectory optimization, 50 for shooting
    time_steps: Optional[int] = Field(default=None, ge=1)
    optimizer: OptimizerConfig = OptimizerConfig()
    output_dir: str = "geomatch_run"
    frame_times: list[float] = [0.0, 0.25, 0.5, 0.75, 1.0]

    @field_validator("frame_times")
    @classmethod
    def _frames(cls, v):
        if not v:
            raise ValueError("frame_times must not be empty")
        if any(not 0.0 <= t <= 1.0 for t in v):
            raise ValueError("frame times must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _solver(self):
        if self.model == "intrinsic" and self.solver != "trajectory":
            raise ValueError("the intrinsic model only supports the trajectory solver")
        if self.model == "hybrid" and self.solver != "trajectory":
            raise ValueError("the hybrid model only supports the trajectory solver")
        return self

    def steps(self) -> int:
        if self.time_steps is not None:
            return self.time_steps
        return 50 if self.solver == "shooting" else 10

    def deformation_sigma(self, source_vertices) -> float:
        if self.kernel_sigma is not None:
            return self.kernel_sigma
        factor = 0.25 if self.model == "hybrid" else 0.5
        return factor * bbox_diagonal(source_vertices)


def bbox_diagonal(vertices) -> float:
    v = np.asarray(vertices)
    return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        else:
            parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> MatchConfig:
    try:
        return MatchConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def load_config(path) -> MatchConfig:
    """Read a JSON config. A run's report.json is accepted too: its "config" entry is used."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "geomatch_version" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    return parse_config(data)


def merge_overrides(cfg: MatchConfig, overrides: dict) -> MatchConfig:
    """Apply dotted-key overrides ("varifold.spatial_sigma": 0.5) and revalidate."""
    data = cfg.model_dump()
    for key, value in overrides.items():
        node = data
        *path, leaf = key.split(".")
        for part in path:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown key '{key}'")
            node = node[part]
        node[leaf] = value
    return parse_config(data)
