#!/usr/bin/env python3
"""
Example usage of dinikit.

Registers a custom coefficient family, classifies a few moduli and runs a
small scenario against the in-memory artifact store.
"""

import numpy as np

from dinikit import (
    LogPowerModulus,
    PowerModulus,
    ScenarioRunner,
    classify,
    family,
    transform_chain,
)
from dinikit.config import Settings
from dinikit.modulus import ScaledModulus
from dinikit.scenario import parse_scenario
from dinikit.solvers import CoefficientField
from dinikit.store import InMemoryArtifactStore


# Define a coefficient family
@family("coefficient", name="tilted-holder")
def tilted_holder(alpha: float = 0.5, amp: float = 0.1) -> CoefficientField:
    """a²² = 1 + amp·|x¹|^α with a fixed off-diagonal tilt."""

    def A(points: np.ndarray) -> np.ndarray:
        out = np.zeros((points.shape[0], 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 0, 1] = out[:, 1, 0] = 0.2
        out[:, 1, 1] = 1.0 + amp * np.minimum(np.abs(points[:, 0]), 1.0) ** alpha
        return out

    omega = ScaledModulus(PowerModulus(alpha), amp)
    return CoefficientField(
        A=A,
        name="tilted-holder",
        params={"alpha": alpha, "modulus": omega.to_dict()},
    )


def main():
    # Dini classification of a few moduli
    moduli = (
        PowerModulus(0.5),
        LogPowerModulus(2.0),
        LogPowerModulus(1.5),
        LogPowerModulus(1.0),
    )
    for omega in moduli:
        report = classify(omega)
        estimate = report.dini_integral_estimate
        print(f"{omega!r}: {report.classification} (∫ω/t ≈ {estimate:.4g})")

    # The derived moduli used by the boundary estimates
    chain = transform_chain(LogPowerModulus(3.0), kappa=0.25, beta=0.5)
    t = np.array([1e-4, 1e-2, 1e-1])
    print("ω*(t):", chain.star(t))

    # A scenario using the family registered above
    scenario = parse_scenario(
        """{
          "name": "tilted",
          "coefficients": {"family": "tilted-holder", "params": {"alpha": 0.5}},
          "data": {"family": "unit-flux"},
          "grids": [32],
          "harness": {"r0": 0.5, "kappa": 0.4, "radii": 3},
          "checks": [
            {"kind": "classification"},
            {"kind": "decay_band", "params": {"band": [0.3, 1.0]}}
          ]
        }"""
    )
    store = InMemoryArtifactStore()
    runner = ScenarioRunner(settings=Settings(), store=store, debug=True)
    report = runner.run(scenario)

    print(report.summary())
    for key in store.keys():
        print(f"  {key}")


if __name__ == "__main__":
    main()
