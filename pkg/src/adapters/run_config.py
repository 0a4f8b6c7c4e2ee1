# src/adapters/run_config.py
"""
RunConfig: the JSON document that drives one run of the lab.

    {"system": {"problem": "kepler" | "rigid_body" | "rotors", ...params},
     "solver": {...}, "analysis": {...}, "output": {...}}

Every section is optional and unknown keys are rejected.
"""
from __future__ import annotations
import json
import pathlib
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError, field_validator

from src.utils.errors import ConfigError
from src.utils.ocp_solver import SolverConfig
from src.utils.reduced_systems import ReducedOCP, make_system

Vec3 = Tuple[float, float, float]
PositiveVec3 = Tuple[PositiveFloat, PositiveFloat, PositiveFloat]

DEFAULT_N = {"kepler": 200, "rigid_body": 300, "rotors": 300}
DEFAULT_PLATEAU_TOL = {"kepler": 1e-3, "rigid_body": 1e-2, "rotors": 1e-2}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KeplerSystem(_Section):
    problem: Literal["kepler"]
    k: PositiveFloat = 1.0
    m2: PositiveFloat = 1.0
    s_bar: PositiveFloat = 4.5
    y0: Optional[Vec3] = None
    s_T: Optional[PositiveFloat] = 6.0
    T: PositiveFloat = 40.0
    theta0: float = 0.0


class RigidBodySystem(_Section):
    problem: Literal["rigid_body"]
    inertia: PositiveVec3 = (1.0, 5.0, 10.0)
    omega_ref: Vec3 = (1.0, 0.0, 0.0)
    u_ref: Vec3 = (0.0, 0.0, 0.0)
    omega0: Vec3 = (0.9, 0.5, 0.5)
    omega_T: Optional[Vec3] = (0.9, 0.5, 0.5)
    T: PositiveFloat = 60.0


class RotorsSystem(_Section):
    problem: Literal["rotors"]
    inertia: PositiveVec3 = (1.0, 5.0, 10.0)
    rotor_inertia: PositiveVec3 = (0.1, 0.1, 0.1)
    omega_ref: Vec3 = (1.0, 0.0, 0.0)
    u_ref: Vec3 = (0.0, 0.0, 0.0)
    omega0: Vec3 = (0.9, 0.5, 0.5)
    v_theta0: Vec3 = (0.0, 0.0, 0.0)
    T: PositiveFloat = 60.0


SystemSection = Annotated[Union[KeplerSystem, RigidBodySystem, RotorsSystem], Field(discriminator="problem")]


class SolverSection(_Section):
    N: Optional[PositiveInt] = None
    substeps: PositiveInt = 4
    max_outer: PositiveInt = 20
    max_inner: PositiveInt = 500
    inner_grad_tol: PositiveFloat = 1e-7
    constraint_tol: PositiveFloat = 1e-8
    penalty_init: PositiveFloat = 10.0
    penalty_growth: float = Field(10.0, gt=1.0)
    memory: PositiveInt = 20
    cold_start: bool = False
    init_control: Optional[List[float]] = None


Window = Tuple[float, float]


class AnalysisSection(_Section):
    zero_tol: PositiveFloat = 1e-7
    entry_window: Window = (0.05, 0.45)
    exit_window: Window = (0.55, 0.95)
    plateau_window: Window = (0.4, 0.6)
    plateau_tol: Optional[PositiveFloat] = None
    r2_min: float = Field(0.9, ge=0.0, le=1.0)
    include_adjoint: Optional[bool] = None

    @field_validator("entry_window", "exit_window", "plateau_window")
    @classmethod
    def _fractions(cls, w: Window) -> Window:
        lo, hi = w
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"window must satisfy 0 <= start < end <= 1, got {w}")
        return w


class OutputSection(_Section):
    directory: Optional[str] = None
    emit_svg: bool = False
    seed: NonNegativeInt = Field(0, lt=2 ** 64)


class RunConfig(_Section):
    system: SystemSection = Field(default_factory=lambda: KeplerSystem(problem="kepler"))
    solver: SolverSection = Field(default_factory=SolverSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def problem(self) -> str:
        return self.system.problem

    def build_ocp(self) -> ReducedOCP:
        params = self.system.model_dump(exclude={"problem"})
        return make_system(self.problem, **params)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            N=s.N or DEFAULT_N[self.problem],
            substeps=s.substeps,
            max_outer=s.max_outer,
            max_inner=s.max_inner,
            inner_grad_tol=s.inner_grad_tol,
            constraint_tol=s.constraint_tol,
            penalty_init=s.penalty_init,
            penalty_growth=s.penalty_growth,
            memory=s.memory,
            init_control=tuple(s.init_control) if s.init_control is not None else None,
            cold_start=s.cold_start,
        )

    @property
    def plateau_tol(self) -> float:
        return self.analysis.plateau_tol or DEFAULT_PLATEAU_TOL[self.problem]

    @property
    def include_adjoint(self) -> bool:
        # only kepler adjoints settle on a plateau; the other problems leave them out unless asked for
        if self.analysis.include_adjoint is not None:
            return self.analysis.include_adjoint
        return self.problem == "kepler"


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(payload: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(payload)
        cfg.build_ocp()
        cfg.solver_config()
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {_format_validation(exc)}") from exc
    return cfg


def load_config(path: Union[str, pathlib.Path, None]) -> RunConfig:
    """Read and validate a RunConfig file; None gives the all-defaults Kepler config."""
    if path is None:
        return parse_config({})
    path = pathlib.Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return parse_config(payload)
