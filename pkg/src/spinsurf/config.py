from __future__ import annotations

import configparser
import os
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import ConfigInvalid
from .geometry import SurfaceChart, custom, cylinder, plane, sphere, torus
from .hamiltonian import ConfinementCase

DEFAULT_OUTPUT_DIR = "spinsurf-out"
LIST_FIELDS = {("fw", "masses")}

_EXPRESSION_NAMESPACE = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "arcsin", "arccos", "arctan", "arctan2",
        "sinh", "cosh", "tanh", "exp", "log", "sqrt", "abs", "pi",
    )
}


class SurfaceConfig(BaseModel):
    preset: Literal["torus", "sphere", "cylinder", "plane", "custom"] = "torus"
    R: float = 2.0
    r: float = 0.5
    a: float = 1.0
    rho: float = 1.0
    L: float = 2 * np.pi
    L1: float = 2 * np.pi
    L2: float = 2 * np.pi
    x: str = ""
    y: str = ""
    z: str = ""
    q1_min: float = 0.0
    q1_max: float = 1.0
    q2_min: float = 0.0
    q2_max: float = 1.0
    periodic1: bool = False
    periodic2: bool = False
    orientation: int = 1

    @field_validator("R", "r", "a", "rho", "L", "L1", "L2")
    @classmethod
    def _positive_length(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("lengths must be positive")
        return value

    @model_validator(mode="after")
    def _check_preset(self) -> SurfaceConfig:
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be 1 or -1")
        if self.preset == "torus" and not self.R > self.r:
            raise ValueError("torus requires R > r")
        if self.preset == "custom":
            if not (self.x and self.y and self.z):
                raise ValueError("custom surface needs x, y and z expressions")
            if self.q1_max <= self.q1_min or self.q2_max <= self.q2_min:
                raise ValueError("custom domain bounds must be increasing")
        return self


class GridConfig(BaseModel):
    n1: int = Field(32, ge=8)
    n2: int = Field(32, ge=8)
    order: int = 2

    @field_validator("order")
    @classmethod
    def _known_order(cls, value: int) -> int:
        if value not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")
        return value


class PhysicsConfig(BaseModel):
    m: float = Field(10.0, gt=0)
    case: Literal["a", "b", "c", "linear", "harmonic", "square_well"] = "c"
    omega: float = Field(1.0, gt=0)
    L_well: float = Field(1.0, gt=0)
    frame_angle: float = 0.0


class SolveConfig(BaseModel):
    k: int = Field(8, ge=0)
    mode: Literal["auto", "dense", "iterative"] = "auto"
    tol: float = Field(1e-10, gt=0)
    residual_tol: float = Field(1e-8, gt=0)
    normal_nodes: int = Field(256, ge=64)


class FWConfig(BaseModel):
    masses: list[float] = Field(default_factory=lambda: [10.0, 20.0, 40.0, 80.0])
    steps: int = Field(3, ge=0, le=3)
    n1: int = Field(8, ge=8)
    n2: int = Field(8, ge=8)
    slope_max: float = -2.0

    @field_validator("masses")
    @classmethod
    def _positive_masses(cls, value: list[float]) -> list[float]:
        if not value or any(m <= 0 for m in value):
            raise ValueError("masses must be a non-empty list of positive values")
        return value


class OutputConfig(BaseModel):
    directory: str = DEFAULT_OUTPUT_DIR
    metric_points: int = Field(20, ge=1)
    metric_tol: float = Field(1e-9, gt=0)


class RunConfig(BaseModel):
    surface: SurfaceConfig = Field(default_factory=SurfaceConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    solve: SolveConfig = Field(default_factory=SolveConfig)
    fw: FWConfig = Field(default_factory=FWConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _states_fit_grid(self) -> RunConfig:
        block_dim = 2 * self.grid.n1 * self.grid.n2
        if self.solve.k > block_dim:
            raise ValueError(f"solve.k={self.solve.k} exceeds the {block_dim} states of one block on this grid")
        return self

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    def confinement(self, kind: str | None = None) -> ConfinementCase:
        return ConfinementCase(
            kind=kind or self.physics.case,
            m=self.physics.m,
            omega=self.physics.omega,
            width=self.physics.L_well,
        )


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for item in exc.errors():
        location = ".".join(str(piece) for piece in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def config_from_mapping(data: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(_format_validation_error(exc)) from exc


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    """Read an INI file whose sections mirror RunConfig; a missing path yields the defaults."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigInvalid(f"config file not found: {path}", field="--config")
        parser = configparser.ConfigParser()
        # Field names are case-sensitive (R vs r).
        parser.optionxform = str  # type: ignore[assignment]
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            values: dict[str, Any] = {}
            for key, raw in parser.items(section):
                if (section, key) in LIST_FIELDS:
                    values[key] = [item.strip() for item in raw.split(",") if item.strip()]
                elif section == "run" and key == "seed":
                    data["seed"] = raw.strip()
                    continue
                else:
                    values[key] = raw.strip()
            if section != "run":
                data[section] = values
    if seed is not None:
        data["seed"] = seed
    return config_from_mapping(data)


def resolve_output_dir(config: RunConfig, override: str | None = None) -> Path:
    """--out, then SPINSURF_OUT, then [output] directory."""
    if override:
        return Path(override)
    env_value = os.environ.get("SPINSURF_OUT", "").strip()
    if env_value:
        return Path(env_value)
    return Path(config.output.directory or DEFAULT_OUTPUT_DIR)


def _compile_expression(name: str, source: str):
    try:
        code = compile(source, f"<surface.{name}>", "eval")
    except SyntaxError as exc:
        raise ConfigInvalid(f"surface.{name}: invalid expression ({exc.msg})", expression=source) from exc
    allowed = set(_EXPRESSION_NAMESPACE) | {"q1", "q2"}
    unknown = sorted(set(code.co_names) - allowed)
    if unknown:
        raise ConfigInvalid(f"surface.{name}: unknown names {unknown}", expression=source)
    return code


def expression_map(x: str, y: str, z: str):
    codes = [_compile_expression(name, src) for name, src in (("x", x), ("y", y), ("z", z))]

    def param_map(q1, q2):
        scope = {**_EXPRESSION_NAMESPACE, "q1": q1, "q2": q2}
        values = [eval(code, {"__builtins__": {}}, scope) for code in codes]  # noqa: S307
        return np.stack(np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in values)), axis=-1)

    return param_map


def build_chart(surface: SurfaceConfig) -> SurfaceChart:
    if surface.preset == "torus":
        return torus(surface.R, surface.r)
    if surface.preset == "sphere":
        return sphere(surface.a)
    if surface.preset == "cylinder":
        return cylinder(surface.rho, surface.L)
    if surface.preset == "plane":
        return plane(surface.L1, surface.L2)
    return custom(
        expression_map(surface.x, surface.y, surface.z),
        domain=((surface.q1_min, surface.q1_max), (surface.q2_min, surface.q2_max)),
        periodic=(surface.periodic1, surface.periodic2),
        orientation=surface.orientation,
    )
