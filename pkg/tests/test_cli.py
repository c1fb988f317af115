"""Tests for the dinikit command line."""

import json

import pytest

from dinikit.cli import bundled_scenarios, main


def test_check_bundled_scenario(capsys):
    """Bundled scenarios resolve by name."""
    assert main(["check", "empty", "flat-laplace"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["empty: ok (0 checks)", "flat-laplace: ok (3 checks)"]


def test_check_canonical_output(capsys):
    """--canonical prints the full JSON form."""
    assert main(["check", "--canonical", "empty"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["name"] == "empty"
    assert data["grids"] == [32]


def test_check_invalid_file(tmp_path, capsys):
    """Schema errors exit with status 2."""
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "bad", "grids": [64, 32]}')
    assert main(["check", str(bad)]) == 2
    assert capsys.readouterr().err.startswith("error: Invalid scenario")

    assert main(["check", str(tmp_path / "missing.json")]) == 2


def test_families_listing(capsys):
    """Text and JSON listings of the registry."""
    assert main(["families", "--kind", "domain"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert any(line.startswith("domain") and " flat " in line for line in lines)
    assert all(line.startswith("domain") for line in lines)

    assert main(["families", "--json"]) == 0
    entries = json.loads(capsys.readouterr().out)
    assert {e["kind"] for e in entries} == {"coefficient", "domain", "data"}


def test_run_and_report(clean_env, tmp_path, capsys):
    """run writes reports under --out; report re-renders them."""
    out = tmp_path / "out"
    assert main(["run", "empty", "--out", str(out), "--seed", "4"]) == 0
    assert "empty: PASS" in capsys.readouterr().out

    saved = json.loads((out / "empty" / "report" / "report.json").read_text())
    assert saved["seed"] == 4
    assert saved["passed"] is True

    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "empty: PASS"


def test_report_without_reports(tmp_path, capsys):
    """An empty directory exits with status 1."""
    assert main(["report", str(tmp_path)]) == 1
    assert "No reports" in capsys.readouterr().err


def test_report_with_unreadable_file(tmp_path, capsys):
    """Corrupt report files are flagged, not fatal."""
    path = tmp_path / "broken" / "report" / "report.json"
    path.parent.mkdir(parents=True)
    path.write_text('{"scenario": "broken"}')
    assert main(["report", str(tmp_path)]) == 1
    assert "unreadable report" in capsys.readouterr().err


def test_command_is_required():
    """argparse exits when no subcommand is given."""
    with pytest.raises(SystemExit):
        main([])


def test_bundled_scenarios_are_shipped():
    """The package ships its scenario directory."""
    names = {p.stem for p in bundled_scenarios()}
    assert {"empty", "constant-control", "holder-decay", "oblique-parabolic"} <= names
