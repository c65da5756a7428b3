"""Problem files and solver settings.

A problem file is JSON. Solver defaults come from the packaged defaults.toml;
the problem's "solver" block overrides single keys and command-line flags
override the problem. Environment:

    MORSE_ACTION_THREADS    worker threads for seed sweeps and branch flows
    MORSE_ACTION_LOG_LEVEL  logging level name
"""

import json
import logging
import math
import os
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .engine.critical import SeedStrategy
from .engine.families import from_block
from .engine.lagrangian import LagrangianModel, SampleBox
from .engine.manifold import BoundaryCondition, ChartedManifold

SCRIPT_DIRECTORY = os.path.dirname(os.path.abspath(__file__))

DEFAULTS_FILE = os.path.join(SCRIPT_DIRECTORY, "defaults.toml")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s"


class ProblemError(ValueError):
    """ malformed or invalid problem file, carries the JSON location """

    def __init__(self, message:str, location:str=""):
        super().__init__(message)
        self.location = location


@lru_cache(maxsize=1)
def load_defaults() -> Dict[str, Any]:
    with open(DEFAULTS_FILE, "rb") as f:
        return tomli.load(f)


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mesh: int = Field(ge=8)
    newton_tol: float = Field(gt=0)
    newton_max_iter: int = Field(gt=0)
    newton_box: float = Field(gt=0)
    null_tol_rel: float = Field(gt=0)
    dedup_action_tol: float = Field(gt=0)
    dedup_path_tol: float = Field(gt=0)
    radius_r0: float = Field(gt=0)
    radius_floor: float = Field(gt=0)
    calibration_samples: int = Field(gt=0)
    cap_bound: float = Field(gt=0)
    flow_t_max: float = Field(gt=0)
    flow_stop_tol: float = Field(gt=0)
    flow_rtol: float = Field(gt=0)
    flow_atol: float = Field(gt=0)
    perturbation_eps: float = Field(gt=0)
    perturbation_retries: int = Field(ge=0)
    identify_tol: float = Field(gt=0)
    ambiguity_tol: float = Field(gt=0)
    sphere_samples: int = Field(ge=4)
    lyapunov_samples: int = Field(gt=0)

    @classmethod
    def from_defaults(cls, overrides:Optional[Dict[str, Any]]=None) -> "SolverSettings":
        values = dict(load_defaults()["solver"])
        values.update(overrides or {})
        return cls(**values)


class ManifoldBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: int = Field(ge=1)
    periodic: Optional[List[bool]] = None

    @model_validator(mode="after")
    def _check_mask(self):
        if self.periodic is not None and len(self.periodic) != self.dim:
            raise ValueError(f"periodic mask has length {len(self.periodic)}, expected {self.dim}")
        return self

    def build(self) -> ChartedManifold:
        return ChartedManifold(self.dim, tuple(self.periodic or [False] * self.dim))


class BoundaryBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["dirichlet", "periodic", "free", "subspace"]
    p: Optional[List[float]] = None
    q: Optional[List[float]] = None
    basis: Optional[List[List[float]]] = None
    anchor: Optional[List[float]] = None

    def build(self) -> BoundaryCondition:
        if self.kind == "dirichlet":
            if self.p is None or self.q is None:
                raise ValueError("Error: dirichlet boundary needs both p and q")
            return BoundaryCondition.dirichlet(self.p, self.q)
        if self.kind == "periodic":
            return BoundaryCondition.periodic_loops()
        if self.kind == "free":
            return BoundaryCondition.free()
        if self.basis is None or self.anchor is None:
            raise ValueError("Error: subspace boundary needs a basis and an anchor")
        return BoundaryCondition.subspace(self.basis, self.anchor)


class SeedBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant_grid", "winding", "fourier"] = "fourier"
    count: int = Field(default=24, gt=0)
    windings: List[int] = Field(default_factory=lambda: [-2, -1, 0, 1, 2])
    amplitude: float = Field(default=6.0, gt=0)
    modes: int = Field(default=4, gt=0)
    noise: float = Field(default=0.02, ge=0)
    coordinate: int = Field(default=0, ge=0)

    def build(self, rng_seed:int) -> SeedStrategy:
        return SeedStrategy(kind=self.kind, count=self.count, windings=tuple(self.windings),
                            amplitude=self.amplitude, modes=self.modes, noise=self.noise,
                            rng_seed=rng_seed, coordinate=self.coordinate)


class CheckBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q_half_width: float = Field(default=1.0, gt=0)
    v_max: float = Field(default=10.0, gt=0)
    samples: int = Field(default=2000, gt=0)


class ProbeBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    meshes: List[int] = Field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    v: Optional[List[float]] = None
    w: Optional[List[float]] = None


class ProblemSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "problem"
    manifold: ManifoldBlock
    boundary: BoundaryBlock
    lagrangian: Dict[str, Any]
    discretization: Dict[str, int] = Field(default_factory=dict)
    solver: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[SeedBlock] = Field(default_factory=lambda: [SeedBlock()])
    sublevel: float = 1.0
    rng_seed: int = 0
    output: Optional[str] = None
    reference: Optional[str] = None
    checks: CheckBlock = Field(default_factory=CheckBlock)
    probe: ProbeBlock = Field(default_factory=ProbeBlock)

    @field_validator("lagrangian")
    @classmethod
    def _needs_family(cls, value):
        if "family" not in value:
            raise ValueError("lagrangian block needs a family")
        return value

    @field_validator("sublevel")
    @classmethod
    def _finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("sublevel must be finite")
        return value

    @property
    def settings(self) -> SolverSettings:
        overrides = dict(self.solver)
        if "N" in self.discretization:
            overrides["mesh"] = self.discretization["N"]
        return SolverSettings.from_defaults(overrides)

    @property
    def mesh(self) -> int:
        return self.settings.mesh

    @property
    def output_dir(self) -> str:
        return self.output or os.path.join("out", self.name)

    def build_manifold(self) -> ChartedManifold:
        return self.manifold.build()

    def build_boundary(self) -> BoundaryCondition:
        bc = self.boundary.build()
        bc.validate(self.build_manifold())
        return bc

    def build_lagrangian(self) -> LagrangianModel:
        return from_block(self.lagrangian, self.manifold.dim)

    def seed_strategies(self) -> List[SeedStrategy]:
        return [block.build(self.rng_seed + i) for i, block in enumerate(self.seeds)]

    def sample_box(self) -> SampleBox:
        return SampleBox.cube(self.manifold.dim, self.checks.q_half_width, self.checks.v_max)


def _location(error:ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ())) or "<root>"


def load_problem(filename:str, mesh:Optional[int]=None, sublevel:Optional[float]=None,
                 seed:Optional[int]=None, out:Optional[str]=None) -> ProblemSpec:
    """ read and validate a problem file, then apply command-line overrides """
    if not os.path.exists(filename):
        raise ProblemError(f"Error: problem file {filename} does not exist")
    with open(filename, "r") as f:
        text = f.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemError(f"Error: malformed JSON in {filename} at line {e.lineno} column {e.colno}: {e.msg}",
                           location=f"line {e.lineno} column {e.colno}")
    if not isinstance(raw, dict):
        raise ProblemError(f"Error: problem file {filename} must hold a JSON object")
    if mesh is not None:
        raw.setdefault("discretization", {})["N"] = mesh
    if sublevel is not None:
        raw["sublevel"] = sublevel
    if seed is not None:
        raw["rng_seed"] = seed
    if out is not None:
        raw["output"] = out
    try:
        spec = ProblemSpec(**raw)
        spec.settings
    except ValidationError as e:
        location = _location(e)
        raise ProblemError(f"Error: invalid problem file {filename} at {location}: {e.errors()[0]['msg']}",
                           location=location)
    return spec


def thread_count() -> int:
    value = os.environ.get("MORSE_ACTION_THREADS")
    if value is None:
        return int(load_defaults()["runtime"]["threads"])
    try:
        return max(1, int(value))
    except ValueError:
        raise ProblemError(f"Error: MORSE_ACTION_THREADS must be an integer, got {value}")


def log_level() -> str:
    return os.environ.get("MORSE_ACTION_LOG_LEVEL", load_defaults()["runtime"]["log_level"]).upper()


def configure_logging(log_file:str) -> None:
    """ route every MorseAction logger to log_file, never to stdout """
    os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, log_level(), logging.DEBUG),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file),
        ],
        force=True,
    )
