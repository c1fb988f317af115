"""Tests for artifact stores."""

import json

import pytest

from dinikit.store import DirectoryArtifactStore, InMemoryArtifactStore, csv_table


@pytest.fixture(params=["memory", "directory"])
def store(request, tmp_path):
    if request.param == "memory":
        return InMemoryArtifactStore()
    return DirectoryArtifactStore(tmp_path / "out")


def test_put_and_get(store):
    """Text is stored verbatim, dicts as sorted JSON."""
    csv_key = store.put("s", "solve", "solution.csv", "x,y,u\n0,0,1\n")
    json_key = store.put("s", "report", "report.json", {"passed": True, "checks": []})
    assert csv_key == "s/solve/solution.csv"
    assert store.get(csv_key) == "x,y,u\n0,0,1\n"

    text = store.get(json_key)
    assert json.loads(text) == {"checks": [], "passed": True}
    assert text.index('"checks"') < text.index('"passed"')


def test_keys_and_clear(store):
    """Keys are sorted and filterable by prefix."""
    store.put("b", "harness", "excess_0.csv", "r,phi\n")
    store.put("a", "solve", "solution.csv", "")
    store.put("a", "report", "report.json", {})
    assert store.keys() == [
        "a/report/report.json",
        "a/solve/solution.csv",
        "b/harness/excess_0.csv",
    ]
    assert store.keys("a/") == ["a/report/report.json", "a/solve/solution.csv"]
    store.clear()
    assert store.keys() == []


def test_directory_store_layout(tmp_path):
    """Artifacts land at <root>/<scenario>/<stage>/<name>."""
    store = DirectoryArtifactStore(tmp_path)
    store.put("flat", "bounds", "pairs.csv", "distance,lhs,rhs\n")
    written = (tmp_path / "flat" / "bounds" / "pairs.csv").read_text()
    assert written == "distance,lhs,rhs\n"
    assert DirectoryArtifactStore(tmp_path / "absent").keys() == []


def test_csv_table_formats_columns():
    """Header line first, rows in scientific notation unless a column format is set."""
    text = csv_table(["t", "omega"], [[0.5, 2.0], [0.25, 1.0]])
    assert text.splitlines() == [
        "t,omega",
        "5.000000000000e-01,2.500000000000e-01",
        "2.000000000000e+00,1.000000000000e+00",
    ]
    assert text.endswith("\n")

    counted = csv_table(["t", "skipped"], [[0.5, 2.0], [1, 3]], fmt=["%.12e", "%d"])
    assert counted.splitlines() == [
        "t,skipped",
        "5.000000000000e-01,1",
        "2.000000000000e+00,3",
    ]

    with pytest.raises(ValueError):
        csv_table(["t", "omega"], [[0.5, 2.0]])
