"""Tests for scenario parsing, canonical form and the report model."""

import json

import pytest

from dinikit.cli import bundled_scenarios
from dinikit.exceptions import ScenarioError
from dinikit.scenario import (
    CheckResult,
    Report,
    dump_scenario,
    load_scenario,
    parse_scenario,
    scenario_hash,
)


def test_minimal_scenario_defaults():
    """Only a name is required."""
    scenario = parse_scenario('{"name": "minimal"}')
    assert scenario.domain.family == "flat"
    assert scenario.coefficients.family == "constant"
    assert scenario.data.family == "paraboloid"
    assert scenario.grids == [32]
    assert scenario.checks == []
    assert scenario.harness.centers == [(0.0, 0.0)]


@pytest.mark.parametrize("path", bundled_scenarios(), ids=lambda p: p.stem)
def test_bundled_scenarios_validate(path):
    """Every shipped scenario parses and names itself after its file."""
    scenario = load_scenario(path)
    assert scenario.name == path.stem


def test_toml_scenario(tmp_path):
    """TOML files are converted to the same model."""
    path = tmp_path / "holder.toml"
    path.write_text(
        'name = "holder"\n'
        "grids = [16, 32]\n"
        "[coefficients]\n"
        'family = "holder"\n'
        "[coefficients.params]\n"
        "alpha = 0.5\n"
    )
    scenario = load_scenario(path)
    assert scenario.coefficients.params == {"alpha": 0.5}
    assert scenario.grids == [16, 32]


@pytest.mark.parametrize(
    "document",
    [
        {"name": "x", "grids": [32, 16]},
        {"name": "x", "grids": [4]},
        {"name": "x", "grids": []},
        {"name": "x", "colour": "blue"},
        {"name": "bad name"},
        {"name": "x", "domain": {"family": "sphere"}},
        {"name": "x", "coefficients": {"family": "holder", "params": {"beta": 0.3}}},
        {"name": "x", "checks": [{"kind": "flat_trace"}]},
        {"name": "x", "checks": [{"kind": "eyeball"}]},
        {"name": "x", "harness": {"kappa": 0.6}},
    ],
)
def test_invalid_scenarios(document):
    """Schema violations surface as ScenarioError."""
    with pytest.raises(ScenarioError):
        parse_scenario(json.dumps(document))


def test_schema_version_mismatch():
    """Other schema versions are refused with a clear message."""
    with pytest.raises(ScenarioError) as exc_info:
        parse_scenario('{"schema_version": 2, "name": "future"}')
    assert "Unsupported schema version" in str(exc_info.value)


def test_unparsable_text():
    """Broken JSON and non-object documents are rejected."""
    with pytest.raises(ScenarioError):
        parse_scenario("{name: ")
    with pytest.raises(ScenarioError):
        parse_scenario("[1, 2]")


def test_missing_file(tmp_path):
    """Unreadable paths raise ScenarioError."""
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nothing.json")


def test_canonical_form_is_stable():
    """dump → parse is a fixed point and the hash ignores key order."""
    a = parse_scenario('{"name": "s", "grids": [16, 32], "seed": 4}')
    b = parse_scenario('{"seed": 4, "grids": [16, 32], "name": "s"}')
    text = dump_scenario(a)
    assert parse_scenario(text) == a
    assert dump_scenario(parse_scenario(text)) == text
    assert scenario_hash(a) == scenario_hash(b)
    assert scenario_hash(a) != scenario_hash(a.model_copy(update={"seed": 5}))


def test_report_summary():
    """One line per check, marked ok or BAD."""
    report = Report(
        scenario="s",
        scenario_hash="0" * 64,
        seed=0,
        passed=False,
        checks=[
            CheckResult(
                name="gradient_exact", kind="solution_error", passed=True, value=1e-12
            ),
            CheckResult(name="decay_band", kind="decay_band", passed=False),
        ],
    )
    lines = report.summary().splitlines()
    assert lines[0] == "s: FAIL"
    assert lines[1].startswith("  [ok ] gradient_exact value=")
    assert lines[2] == "  [BAD] decay_band"
    assert Report.model_validate_json(report.model_dump_json()) == report
