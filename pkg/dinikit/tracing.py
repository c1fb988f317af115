"""Provenance tracing for dinikit pipelines.

Every stage of a reduction or scenario run is recorded with a hash of its
inputs and the empirical constants it produced, so a report can be traced
back to the exact configuration behind it.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


class StageKind(str, Enum):
    """Kinds of steps that can occur during a pipeline run."""

    ABSORB = "absorb"
    STRAIGHTEN = "straighten"
    LIFT = "lift"
    FLATTEN = "flatten"
    SOLVE = "solve"
    HARNESS = "harness"
    BOUND = "bound"
    CHECK = "check"


def canonical_json(data: Any) -> str:
    """Sorted-key compact JSON; non-JSON values fall back to ``str``."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def input_hash(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


@dataclass
class TraceStep:
    """A single stage of a pipeline run."""

    kind: StageKind
    timestamp: float
    inputs_hash: str
    constants: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.kind.value,
            "timestamp": self.timestamp,
            "inputs_hash": self.inputs_hash,
            "constants": self.constants,
            "artifacts": self.artifacts,
        }


@dataclass
class RunTrace:
    """A full pipeline run for debugging and provenance."""

    run_id: str
    label: str
    start_time: float
    end_time: Optional[float] = None
    error: Optional[str] = None
    steps: List[TraceStep] = field(default_factory=list)

    @property
    def duration(self) -> Optional[float]:
        if self.end_time is None:
            return None
        return self.end_time - self.start_time

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "label": self.label,
            "error": self.error,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "duration": self.duration,
            "steps": [step.to_dict() for step in self.steps],
        }


class Tracer:
    """Collects structured provenance for one run at a time."""

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self.current_run: Optional[RunTrace] = None
        self.last_run: Optional[RunTrace] = None

    # Run lifecycle -----------------------------------------------------

    def start_run(self, label: str) -> None:
        """Start tracing a new run."""
        if not self.enabled:
            return

        self.current_run = RunTrace(
            run_id=str(uuid.uuid4()),
            label=label,
            start_time=time.time(),
        )

    def end_run(self, error: Optional[Exception] = None) -> None:
        """Finish the current run, recording an error if one occurred."""
        if not self.enabled or not self.current_run:
            return

        self.current_run.end_time = time.time()
        if error is not None:
            self.current_run.error = f"{type(error).__name__}: {error}"
        self.last_run = self.current_run
        self.current_run = None

    # Step logging ------------------------------------------------------

    def _add_step(
        self, kind: StageKind, inputs: Any, constants: Dict[str, Any]
    ) -> Optional[TraceStep]:
        if not self.enabled or not self.current_run:
            return None

        step = TraceStep(
            kind=kind,
            timestamp=time.time(),
            inputs_hash=input_hash(inputs),
            constants=constants,
        )
        self.current_run.steps.append(step)
        return step

    def log_stage(
        self,
        kind: StageKind,
        *,
        inputs: Any,
        constants: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Log a completed stage with its input hash and constants."""
        self._add_step(kind, inputs, dict(constants or {}))

    def log_constants(self, kind: StageKind, name: str, values: Dict[str, Any]) -> None:
        """Log empirical constants fitted outside a stage body."""
        self._add_step(kind, {"name": name}, {name: values})

    def log_artifact(self, kind: StageKind, path: str) -> None:
        """Attach an artifact path to the latest step of ``kind``."""
        if not self.enabled or not self.current_run:
            return
        for step in reversed(self.current_run.steps):
            if step.kind == kind:
                step.artifacts.append(path)
                return
        step = self._add_step(kind, {"artifact": path}, {})
        if step is not None:
            step.artifacts.append(path)
