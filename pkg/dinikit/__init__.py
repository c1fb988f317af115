"""dinikit - numerical toolkit for boundary regularity under Dini mean oscillation."""

__version__ = "0.1.0"

from .exceptions import (
    DiniKitError,
    InvalidModulusError,
    NumericError,
    ObliquenessError,
    ParameterError,
    PatchTooLargeError,
    RejectedInputError,
    ResolutionError,
    ScenarioError,
    SingularSystemError,
    StageError,
)
from .geometry import GraphDomain, MollifierSpec, regularized_distance
from .harness import c2_global_pipeline, decay_study, excess, modulus_bound_compare
from .modulus import (
    LogPowerModulus,
    Modulus,
    PowerModulus,
    TableModulus,
    classify,
    dini_integral,
    majorant_beta,
)
from .registry import family
from .runner import ScenarioRunner, run
from .scenario import Report, Scenario, load_scenario
from .solvers import CoefficientField, HalfBall, solve_conormal, solve_mixed_nd
from .transforms import transform_chain

__all__ = [
    "Modulus",
    "PowerModulus",
    "LogPowerModulus",
    "TableModulus",
    "dini_integral",
    "classify",
    "majorant_beta",
    "transform_chain",
    "GraphDomain",
    "MollifierSpec",
    "regularized_distance",
    "CoefficientField",
    "HalfBall",
    "solve_conormal",
    "solve_mixed_nd",
    "excess",
    "decay_study",
    "modulus_bound_compare",
    "c2_global_pipeline",
    "family",
    "Scenario",
    "Report",
    "load_scenario",
    "ScenarioRunner",
    "run",
    "DiniKitError",
    "InvalidModulusError",
    "ParameterError",
    "ResolutionError",
    "NumericError",
    "PatchTooLargeError",
    "SingularSystemError",
    "ObliquenessError",
    "RejectedInputError",
    "ScenarioError",
    "StageError",
]
