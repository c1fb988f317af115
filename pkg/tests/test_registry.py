"""Tests for the generator registry."""

from typing import Dict, List, Optional

import numpy as np
import pytest

from dinikit.exceptions import FamilyError, InvalidFamilyArguments, ParameterError
from dinikit.families.coefficients import coefficient_modulus, generate_coefficients
from dinikit.fields import Grid2D
from dinikit.geometry import GraphDomain
from dinikit.registry import _REGISTRY, Family, family, get_family, list_families


@pytest.fixture
def scratch_registry():
    """Drop families registered by a test once it finishes."""
    before = set(_REGISTRY)
    yield
    for key in set(_REGISTRY) - before:
        del _REGISTRY[key]


def test_family_decorator_defaults(scratch_registry):
    """Test @family with the default name."""

    @family("data")
    def scaled_flux(scale: float) -> float:
        """Scaled unit flux."""
        return 2.0 * scale

    entry = scaled_flux._family
    assert isinstance(entry, Family)
    assert entry.kind == "data"
    assert entry.name == "scaled-flux"
    assert entry.description == "Scaled unit flux."
    assert entry.parameters["properties"]["scale"]["type"] == "number"
    assert get_family("data", "scaled-flux") is entry


def test_family_decorator_with_name(scratch_registry):
    """Test @family with a custom name."""

    @family("domain", name="custom")
    def anything():
        pass

    assert anything._family.name == "custom"
    assert ("domain", "custom") in _REGISTRY


def test_family_execution(scratch_registry):
    """Ints are accepted where floats are annotated."""

    @family("coefficient")
    def add(a: float, b: float = 1.0) -> float:
        return a + b

    assert add._family(a=2) == 3.0
    assert add._family(2.0, b=0.5) == 2.5


def test_family_execution_with_invalid_args(scratch_registry):
    """Missing and mistyped arguments are rejected before the call."""

    @family("coefficient")
    def needs_int(n: int):
        pass

    with pytest.raises(InvalidFamilyArguments):
        needs_int._family()

    with pytest.raises(InvalidFamilyArguments):
        needs_int._family(n="three")


def test_family_schema_for_complex_types(scratch_registry):
    """Lists map to arrays, Optional unwraps and defaults are kept."""

    @family("domain")
    def table_like(x: List[float], meta: Dict[str, int], b: Optional[float] = 0.5):
        pass

    params = table_like._family.parameters
    assert params["properties"]["x"]["type"] == "array"
    assert params["properties"]["meta"]["type"] == "object"
    assert params["properties"]["b"]["type"] == "number"
    assert params["properties"]["b"]["default"] == 0.5
    assert params["required"] == ["x", "meta"]


def test_family_error_handling(scratch_registry):
    """Foreign exceptions are wrapped; toolkit errors pass through."""

    @family("data")
    def broken():
        raise ValueError("Something went wrong")

    @family("data")
    def out_of_range():
        raise ParameterError("alpha must lie in (0, 1)")

    with pytest.raises(FamilyError) as exc_info:
        broken._family()
    assert "Error in data family 'broken'" in str(exc_info.value)
    assert "ValueError: Something went wrong" in str(exc_info.value)

    with pytest.raises(ParameterError):
        out_of_range._family()


def test_unknown_family_lists_known_names():
    """Lookups of unregistered names report what exists."""
    with pytest.raises(FamilyError) as exc_info:
        get_family("domain", "sphere")
    assert "flat" in str(exc_info.value)


def test_builtin_families_are_registered():
    """Every kind ships its generators."""
    domains = {f.name for f in list_families("domain")}
    assert {"flat", "parabolic", "power", "table"} <= domains
    coefficients = {f.name for f in list_families("coefficient")}
    assert {"constant", "holder", "dini-log", "non-dini-log"} <= coefficients
    data = {f.name for f in list_families("data")}
    assert {"paraboloid", "cosine", "unit-flux", "bump"} <= data
    kinds = {f.to_dict()["kind"] for f in list_families()}
    assert kinds <= {"coefficient", "domain", "data"}


def test_builtin_domain_family_call():
    """Registered domains build GraphDomain objects and check types."""
    domain = get_family("domain", "flat")(b=0.3)
    assert isinstance(domain, GraphDomain)
    assert domain.b == 0.3

    with pytest.raises(InvalidFamilyArguments):
        get_family("domain", "flat")(b="wide")


def test_generate_coefficients_checks_ellipticity():
    """A grid triggers the ellipticity check on its active nodes."""
    grid = Grid2D.uniform((-1.0, 1.0, 0.0, 1.0), (9, 5))
    coeffs = generate_coefficients("holder", {"alpha": 0.5, "amp": 0.2}, grid)
    lam, Lam = coeffs.ellipticity(grid.active_points())
    assert lam == pytest.approx(1.0)
    assert Lam == pytest.approx(np.hypot(1.2, 1.0))
    assert coefficient_modulus(coeffs)(0.25) == pytest.approx(0.2 * 0.5)

    indefinite = {"matrix": [[1.0, 0.0], [0.0, -1.0]]}
    assert generate_coefficients("constant", indefinite).name
    with pytest.raises(ParameterError):
        generate_coefficients("constant", indefinite, grid)
