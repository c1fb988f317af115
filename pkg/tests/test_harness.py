"""Tests for the excess, decay studies and the assembled bounds."""

import numpy as np
import pytest

from dinikit.exceptions import ParameterError, ResolutionError
from dinikit.harness import (
    choose_beta,
    c2_global_pipeline,
    decay_study,
    excess,
    fit_decay,
    modulus_bound_compare,
    sample_half_ball,
)
from dinikit.modulus import LogPowerModulus, PowerModulus, ZeroModulus
from dinikit.solvers import (
    CoefficientField,
    DiscreteProblem,
    DiscreteSolution,
    HalfBall,
)


def radial(p):
    return (p[:, 0] ** 2 + p[:, 1] ** 2) ** 0.75


@pytest.fixture(scope="module")
def cone():
    """u = |x|^{3/2}: Du is exactly C^{1/2} at the origin."""
    return sample_half_ball(radial, 1.0, n=128)


def as_solution(field):
    problem = DiscreteProblem(
        "mixed", HalfBall(), CoefficientField.constant(np.eye(2)), 64
    )
    return DiscreteSolution(problem, field, residual=0.0)


# Excess ------------------------------------------------------------------------


def test_excess_of_affine_function_vanishes():
    """Du constant: φ = 0."""
    u = sample_half_ball(lambda p: 2.0 * p[:, 0] + 3.0 * p[:, 1], 1.0, n=64)
    assert excess(u, (0.0, 0.0), 0.5) < 1e-10


def test_excess_with_p_one_matches_mean_deviation():
    """u = x², p = 1: q = 0 and φ = ⨍_{B⁺}|2x| = 8r/(3π)."""
    u = sample_half_ball(lambda p: p[:, 0] ** 2, 1.0, n=64)
    r = 0.5
    expected = 8.0 * r / (3.0 * np.pi)
    assert excess(u, (0.0, 0.0), r, p=1.0) == pytest.approx(expected, rel=0.03)


def test_excess_is_monotone_in_p():
    """p-means increase with p."""
    u = sample_half_ball(lambda p: np.sin(3.0 * p[:, 0]) * p[:, 1], 1.0, n=64)
    low = excess(u, (0.0, 0.0), 0.5, p=0.5)
    high = excess(u, (0.0, 0.0), 0.5, p=1.0)
    assert 0.0 < low <= high * 1.01


def test_excess_hessian_mode():
    """Quadratics have constant D²u, so the hessian excess vanishes."""
    u = sample_half_ball(lambda p: p[:, 0] ** 2 - p[:, 0] * p[:, 1], 1.0, n=64)
    assert excess(u, (0.0, 0.0), 0.5, mode="hessian") < 1e-8


@pytest.mark.parametrize("p", [0.5, 1.0])
def test_excess_is_translation_covariant(p):
    """Shifting u and x̄ by the same grid-aligned offset leaves φ unchanged."""

    def wave(q):
        return np.sin(3.0 * q[:, 0]) * q[:, 1] + q[:, 0] ** 2

    shift = np.array([0.25, 0.0])
    u = sample_half_ball(wave, 1.0, n=64)
    moved = sample_half_ball(lambda q: wave(q - shift), 1.0, n=64, center=tuple(shift))
    center = np.array([0.125, 0.0])
    r = 0.4937
    expected = excess(u, center, r, p=p)
    assert expected > 0.0
    assert excess(moved, center + shift, r, p=p) == pytest.approx(expected, rel=1e-6)


def test_excess_rejects_small_balls_and_bad_modes():
    """Balls need MIN_SAMPLES nodes; the mode must be known."""
    u = sample_half_ball(lambda p: p[:, 0], 1.0, n=32)
    with pytest.raises(ResolutionError):
        excess(u, (0.0, 0.0), 2.0 / 32.0)
    with pytest.raises(ParameterError):
        excess(u, (0.0, 0.0), 0.5, mode="laplacian")


# Decay -------------------------------------------------------------------------


def test_fit_decay():
    """Exact powers give the exponent; short tables give NaN."""
    r = np.array([0.5, 0.2, 0.08, 0.032])
    slope, stderr = fit_decay(r, 3.0 * r**0.5)
    assert slope == pytest.approx(0.5)
    assert stderr == pytest.approx(0.0, abs=1e-10)

    slope, stderr = fit_decay(r[:2], r[:2] ** 2)
    assert slope == pytest.approx(2.0)
    assert np.isnan(stderr)

    assert all(np.isnan(v) for v in fit_decay(r[:1], r[:1]))
    assert all(np.isnan(v) for v in fit_decay(r, np.zeros(4)))


def test_decay_study_recovers_holder_exponent(cone):
    """φ(0, r) ∝ r^{1/2} for |x|^{3/2}; interior centers log comparability."""
    study = decay_study(cone, [(0.0, 0.0), (0.0, 0.25)], r0=0.5, kappa=0.4, count=3)
    boundary, interior = study.tables
    assert boundary.label == "boundary"
    assert interior.label == "interior"
    assert len(boundary.radii) == 3
    assert 0.35 <= boundary.slope <= 0.65

    assert len(study.comparability) == 1
    assert np.isfinite(study.comparability[0]["ratio"])
    assert np.isfinite(study.C0())
    assert study.to_dict()["kappa"] == 0.4
    assert boundary.to_csv().startswith("r,phi")


def test_decay_study_stops_at_unresolved_radii():
    """Radii below the sampling floor are dropped."""
    u = sample_half_ball(radial, 1.0, n=32)
    study = decay_study(u, [(0.0, 0.0)], r0=0.5, kappa=0.25, count=5)
    assert len(study.tables[0].radii) < 5


def test_decay_study_rejects_bad_kappa(cone):
    """κ must lie in (0, 1)."""
    with pytest.raises(ParameterError):
        decay_study(cone, [(0.0, 0.0)], r0=0.5, kappa=1.5)


@pytest.mark.parametrize(
    "C0, beta", [(0.0, 0.9), (0.2, 0.9), (0.3, 0.75), (0.4, 0.5), (10.0, 0.5)]
)
def test_choose_beta(C0, beta):
    """Largest β with 4^{(1−p)/p}C₀κ ≤ κ^β, p = 1/2 and κ = 1/4."""
    assert choose_beta(C0, kappa=0.25, p=0.5) == beta


# Bound assembly ----------------------------------------------------------------


def test_bound_compare_for_holder_gradient(cone):
    """|Du(x) − Du(y)| against the assembled bound for ω_A = t^{3/10}."""
    result = modulus_bound_compare(
        as_solution(cone), PowerModulus(0.3), ZeroModulus(), pairs=400
    )
    assert np.isfinite(result.C_fit)
    assert result.C_fit > 0
    assert result.coverage >= 0.99
    assert result.vanishing_checked
    assert 0.0 < result.vanishing_ratio < 1.0
    assert result.to_csv().startswith("distance,lhs,rhs")
    assert set(result.slack) == {"min", "median", "max"}


def test_bound_compare_skips_vanishing_check_for_non_dini_input(cone):
    """A non-Dini ω_A is reported, not rejected."""
    result = modulus_bound_compare(
        as_solution(cone), LogPowerModulus(1.0), ZeroModulus(), pairs=200
    )
    assert not result.vanishing_checked


def test_bound_compare_rejects_region_without_nodes(cone):
    """A sampling ball off the grid is a resolution problem, not a crash."""
    with pytest.raises(ResolutionError):
        modulus_bound_compare(
            as_solution(cone),
            PowerModulus(0.3),
            ZeroModulus(),
            center=(5.0, 0.0),
            radius=0.5,
            pairs=100,
        )


def test_bound_compare_respects_constant_ceiling(cone):
    """C_fit above C_max fails the comparison."""
    result = modulus_bound_compare(
        as_solution(cone), PowerModulus(0.5), ZeroModulus(), pairs=200, C_max=0.0
    )
    assert not result.passed


# Global C² ---------------------------------------------------------------------


def test_c2_pipeline_with_smooth_data():
    """Zero moduli close the smallness condition at the first scale."""
    u = sample_half_ball(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2, 1.0, n=64)
    report = c2_global_pipeline(u, radius=1.0, C=1.0)
    assert report.s0 == pytest.approx(0.25)
    assert report.measured == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-6)
    assert report.bound >= report.measured
    assert report.passed
    assert report.to_dict()["inconclusive"] is False


def test_c2_pipeline_calibrates_constant():
    """Without C the interior calibration supplies one, at least 1."""
    u = sample_half_ball(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2, 1.0, n=64)
    report = c2_global_pipeline(u, radius=1.0)
    assert report.C >= 1.0
    assert report.calibration


def test_c2_pipeline_is_inconclusive_for_non_dini_coefficients():
    """A divergent ϑ₀ integral leaves no admissible s₀."""
    u = sample_half_ball(lambda p: p[:, 0] ** 2, 1.0, n=32)
    report = c2_global_pipeline(u, radius=1.0, omega_A=LogPowerModulus(1.0), C=1.0)
    assert report.inconclusive
    assert report.s0 is None
    assert not report.passed
