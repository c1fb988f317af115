"""Tests for provenance tracing."""

from dinikit.tracing import StageKind, Tracer, input_hash


def test_run_lifecycle():
    """Steps are recorded in order and the run moves to last_run."""
    tracer = Tracer()
    tracer.start_run("demo")
    tracer.log_stage(StageKind.ABSORB, inputs={"beta0": 1.0}, constants={"K": 2.0})
    tracer.log_stage(StageKind.STRAIGHTEN, inputs={"x0": 0.0})
    assert tracer.current_run is not None
    tracer.end_run()

    assert tracer.current_run is None
    run = tracer.last_run.to_dict()
    assert run["label"] == "demo"
    assert run["error"] is None
    assert run["duration"] >= 0.0
    assert [s["stage"] for s in run["steps"]] == ["absorb", "straighten"]
    assert run["steps"][0]["constants"] == {"K": 2.0}
    assert run["steps"][0]["inputs_hash"] == input_hash({"beta0": 1.0})


def test_error_is_recorded():
    """end_run keeps the exception type and message."""
    tracer = Tracer()
    tracer.start_run("failing")
    tracer.end_run(error=ValueError("boom"))
    assert tracer.last_run.error == "ValueError: boom"


def test_artifacts_attach_to_latest_step():
    """Artifacts join the newest step of their kind or open a new one."""
    tracer = Tracer()
    tracer.start_run("artifacts")
    tracer.log_stage(StageKind.SOLVE, inputs={})
    tracer.log_artifact(StageKind.SOLVE, "s/solve/solution.csv")
    tracer.log_artifact(StageKind.BOUND, "s/bounds/pairs.csv")
    tracer.log_constants(StageKind.HARNESS, "fit", {"C0": 0.3})
    steps = tracer.current_run.steps
    assert steps[0].artifacts == ["s/solve/solution.csv"]
    assert steps[1].kind is StageKind.BOUND
    assert steps[1].artifacts == ["s/bounds/pairs.csv"]
    assert steps[2].constants == {"fit": {"C0": 0.3}}


def test_disabled_tracer_records_nothing():
    """A disabled tracer ignores every call."""
    tracer = Tracer(enabled=False)
    tracer.start_run("quiet")
    tracer.log_stage(StageKind.SOLVE, inputs={})
    tracer.end_run()
    assert tracer.current_run is None
    assert tracer.last_run is None


def test_input_hash_ignores_key_order():
    """Hashes use canonical JSON."""
    assert input_hash({"a": 1, "b": [1, 2]}) == input_hash({"b": [1, 2], "a": 1})
    assert input_hash({"a": 1}) != input_hash({"a": 2})
    assert StageKind("flatten") is StageKind.FLATTEN
