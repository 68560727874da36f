"""Run configuration: TOML files validated into pydantic models."""
from __future__ import annotations

import re
import sys
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

COMMANDS = ("scatter", "gp", "bogoliubov", "expand", "verify")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OutputBlock(_Block):
    directory: str = "bec3-out"
    formats: List[Literal["csv", "json", "svg"]] = ["csv", "json"]
    seed: int = 0


class PotentialBlock(_Block):
    dimension: Literal[3, 6] = 3
    family: Literal["square_well", "gaussian", "tabulated"] = "square_well"
    construction: Literal["radial", "isotropic_after_M", "product_triplet"] = "radial"
    v0: Optional[float] = Field(default=None, ge=0)
    radius: Optional[float] = Field(default=None, gt=0)
    amplitude: Optional[float] = Field(default=None, ge=0)
    width: Optional[float] = Field(default=None, gt=0)
    cutoff: float = Field(default=6.0, gt=0)
    file: Optional[str] = None

    @model_validator(mode="after")
    def _needs(self):
        need = {"square_well": ("v0", "radius"), "gaussian": ("amplitude", "width"), "tabulated": ("file",)}
        for name in need[self.family]:
            if getattr(self, name) is None:
                raise ValueError(f"family {self.family!r} requires field {name!r}")
        if self.dimension == 3 and self.construction != "radial":
            raise ValueError("construction applies to dimension 6 only")
        return self


class ScatterSolver(_Block):
    method: Literal["radial", "grid", "direct", "change-of-variables"] = "radial"
    factors: List[float] = [4.0, 8.0, 16.0]
    nodes: int = Field(default=2000, ge=8)
    model: Literal["reciprocal", "linear"] = "reciprocal"
    points: int = Field(default=16, ge=8)
    truncation_radius: Optional[float] = Field(default=None, gt=0)
    min_points_per_radius: float = Field(default=8.0, gt=0)
    potential_subsamples: int = Field(default=1, ge=1)
    memory_cap_gib: float = Field(default=4.0, gt=0)
    metric: Literal["M", "identity"] = "M"
    scales: List[float] = [1.0]


class TrapBlock(_Block):
    kind: Literal["none", "power", "tabulated"] = "none"
    C: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=2.0, gt=0)
    file: Optional[str] = None

    @model_validator(mode="after")
    def _file(self):
        if self.kind == "tabulated" and self.file is None:
            raise ValueError("tabulated trap requires field 'file' (.npy array on the grid)")
        return self


class GPBlock(_Block):
    side: float = Field(default=1.0, gt=0)
    points: int = Field(default=32, ge=4)
    boundary: Literal["periodic", "dirichlet"] = "periodic"
    b1: float = 0.0
    b2: float = Field(default=0.0, ge=0)
    trap: TrapBlock = TrapBlock()


class GPSolver(_Block):
    step: Optional[float] = Field(default=None, gt=0)
    max_iterations: int = Field(default=5000, ge=1)
    tolerance: float = Field(default=1e-9, gt=0)
    restarts: int = Field(default=1, ge=1)
    initial: Literal["auto", "constant", "gaussian", "random"] = "auto"


class SpectrumBlock(_Block):
    k: int = Field(default=20, ge=1)
    method: Literal["auto", "dense", "iterative"] = "auto"
    convention: Literal["half", "exact"] = "half"


class ExpandBlock(_Block):
    a: float = Field(gt=0)
    b_M: float = Field(gt=0)
    rho_min: float = Field(default=1e-6, gt=0)
    rho_max: float = Field(default=1e-1, gt=0)
    samples: int = Field(default=41, ge=2)
    order: Literal[0, 1, 2] = 2
    threshold: float = Field(default=0.1, gt=0)

    @model_validator(mode="after")
    def _range(self):
        if self.rho_max <= self.rho_min:
            raise ValueError("rho_max must exceed rho_min")
        return self


class VerifyBlock(_Block):
    quick: bool = False


class RunConfig(_Block):
    command: Literal["scatter", "gp", "bogoliubov", "expand", "verify"]
    workers: int = Field(default=1, ge=1)
    output: OutputBlock = OutputBlock()
    potential: Optional[PotentialBlock] = None
    scatter: ScatterSolver = ScatterSolver()
    problem: Optional[GPBlock] = None
    solver: GPSolver = GPSolver()
    spectrum: SpectrumBlock = SpectrumBlock()
    expand: Optional[ExpandBlock] = None
    verify: VerifyBlock = VerifyBlock()

    @model_validator(mode="after")
    def _blocks(self):
        required = {"scatter": "potential", "gp": "problem", "bogoliubov": "problem", "expand": "expand"}
        block = required.get(self.command)
        if block and getattr(self, block) is None:
            raise ValueError(f"command {self.command!r} requires a [{block}] table")
        return self


def _location(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = _location(err["loc"])
        if err["type"] == "extra_forbidden":
            msg = f"{source}: unknown key '{loc}'"
        else:
            msg = f"{source}: invalid value for '{loc}': {err['msg']}"
        raise ConfigError(msg, location=loc) from exc


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    """Read and validate a TOML run configuration.

    ``overrides`` maps dotted scalar keys (``"output.seed"``) to values applied
    before validation.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", location=str(path)) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"; location becomes path:L:C
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        where = f"{path}:{m.group(1)}:{m.group(2)}" if m else str(path)
        raise ConfigError(f"{path}: parse error: {exc}", location=where) from exc
    for key, value in (overrides or {}).items():
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return parse_config(data, str(path))
