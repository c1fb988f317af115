"""Scenario and report schema.

Scenarios are JSON (or TOML, converted on load) documents with a schema
version; reports are the persisted quantitative outcome of one run.
"""

import hashlib
import inspect
import json
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from typing_extensions import Literal

from .exceptions import FamilyError, ScenarioError
from .registry import get_family
from .tracing import canonical_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

StageName = Literal["modulus", "solve", "harness", "bounds", "reduce", "c2"]
CheckKind = Literal[
    "classification",
    "coefficient_modulus",
    "solution_error",
    "decay_band",
    "decay_floor",
    "one_step_stability",
    "bound_coverage",
    "flat_trace",
    "c2_bound",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FamilySpec(_Strict):
    """A registered generator and its keyword arguments."""

    family: str
    params: Dict[str, Any] = Field(default_factory=dict)


class ObliqueSpec(_Strict):
    beta: Tuple[float, float]
    beta0: float = 0.0
    mu0: float = Field(0.1, gt=0.0)
    x0: float = 0.0
    r: float = Field(0.2, gt=0.0)
    resolution: int = Field(17, ge=9)


class SolverSpec(_Strict):
    shape: Literal["half_ball", "smooth_half_ball"] = "half_ball"
    radius: float = Field(1.0, gt=0.0)


class HarnessSpec(_Strict):
    p: Optional[float] = Field(None, gt=0.0, le=1.0)
    kappa: Optional[float] = Field(None, gt=0.0, lt=0.5)
    beta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    mode: Literal["gradient", "hessian"] = "gradient"
    centers: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    r0: float = Field(0.5, gt=0.0)
    radii: int = Field(4, ge=2)
    pairs: int = Field(2000, ge=10)


class CheckSpec(_Strict):
    kind: CheckKind
    name: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.name or self.kind


class Scenario(_Strict):
    """Declarative description of one experiment."""

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
    description: str = ""
    seed: Optional[int] = None
    domain: FamilySpec = Field(default_factory=lambda: FamilySpec(family="flat"))
    coefficients: FamilySpec = Field(
        default_factory=lambda: FamilySpec(family="constant")
    )
    data: FamilySpec = Field(default_factory=lambda: FamilySpec(family="paraboloid"))
    oblique: Optional[ObliqueSpec] = None
    solver: SolverSpec = Field(default_factory=SolverSpec)
    grids: List[int] = Field(default_factory=lambda: [32])
    harness: HarnessSpec = Field(default_factory=HarnessSpec)
    stages: List[StageName] = Field(default_factory=list)
    checks: List[CheckSpec] = Field(default_factory=list)

    @field_validator("grids")
    @classmethod
    def _grids_increasing(cls, grids: List[int]) -> List[int]:
        if not grids:
            raise ValueError("at least one grid size is required")
        if any(n < 8 for n in grids):
            raise ValueError("grid sizes must be at least 8 cells per radius")
        if any(b <= a for a, b in zip(grids, grids[1:])):
            raise ValueError("grid sizes must be strictly increasing")
        return grids

    @model_validator(mode="after")
    def _families_exist(self) -> "Scenario":
        for kind, spec, extra in (
            ("domain", self.domain, ()),
            ("coefficient", self.coefficients, ()),
            ("data", self.data, ("coeffs",)),
        ):
            try:
                entry = get_family(kind, spec.family)
            except FamilyError as exc:
                raise ValueError(str(exc)) from exc
            sig = inspect.signature(entry.func)
            try:
                sig.bind(*[None] * len(extra), **spec.params)
            except TypeError as exc:
                raise ValueError(f"{kind} family '{spec.family}': {exc}") from exc
        needs_oblique = any(c.kind in ("flat_trace", "c2_bound") for c in self.checks)
        if needs_oblique and self.oblique is None:
            raise ValueError("flat_trace and c2_bound checks need an oblique block")
        return self


class CheckResult(BaseModel):
    name: str
    kind: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[Union[float, List[float]]] = None
    detail: Dict[str, Any] = Field(default_factory=dict)


class Report(BaseModel):
    """Outcome of one scenario run."""

    schema_version: int = SCHEMA_VERSION
    scenario: str
    scenario_hash: str
    seed: int
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)
    results: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    environment: Dict[str, str] = Field(default_factory=dict)
    timing: Dict[str, float] = Field(default_factory=dict)
    trace: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None

    def summary(self) -> str:
        lines = [f"{self.scenario}: {'PASS' if self.passed else 'FAIL'}"]
        for check in self.checks:
            mark = "ok " if check.passed else "BAD"
            value = "" if check.value is None else f" value={check.value:.4g}"
            lines.append(f"  [{mark}] {check.name}{value}")
        if self.error:
            lines.append(f"  error: {self.error}")
        return "\n".join(lines)


# Parsing -------------------------------------------------------------------


def parse_scenario(text: str, fmt: Literal["json", "toml"] = "json") -> Scenario:
    """Parse and validate scenario text."""
    try:
        data = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ScenarioError(f"Cannot parse {fmt} scenario: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("A scenario must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            f"Unsupported schema version {version!r}; this build reads {SCHEMA_VERSION}"
        )
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(f"Invalid scenario: {exc}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"Cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, "toml" if path.suffix.lower() == ".toml" else "json")


def dump_scenario(scenario: Scenario) -> str:
    """Canonical JSON form: every field, sorted keys, two-space indent."""
    return json.dumps(scenario.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def scenario_hash(scenario: Scenario) -> str:
    text = canonical_json(scenario.model_dump(mode="json"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def environment_fingerprint() -> Dict[str, str]:
    import numpy
    import scipy

    from . import __version__

    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "dinikit": __version__,
    }
