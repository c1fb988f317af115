"""Tests for empirical mean oscillation and continuity moduli."""

import numpy as np
import pytest

from dinikit.exceptions import ResolutionError
from dinikit.fields import Grid2D, ScalarField
from dinikit.oscillation import (
    empirical_continuity_modulus,
    empirical_mean_oscillation,
    product_oscillation_check,
)


@pytest.fixture
def square_grid():
    return Grid2D.uniform((-1.0, 1.0, -1.0, 1.0), (65, 65))


def disk(points):
    return points[:, 0] ** 2 + points[:, 1] ** 2 <= 1.0


RADII = [0.125, 0.25, 0.5]


def test_constant_field_has_zero_moduli(square_grid):
    """Constants oscillate by zero."""
    f = ScalarField.from_function(square_grid, lambda p: np.full(p.shape[0], 3.0))
    assert np.all(empirical_mean_oscillation(f, RADII)(np.array(RADII)) == 0.0)
    assert np.all(empirical_continuity_modulus(f, RADII)(np.array(RADII)) == 0.0)


def test_continuity_modulus_of_linear_field(square_grid):
    """ϱ_f(t) = t for f(x) = x¹ up to one grid cell."""
    f = ScalarField.from_function(square_grid, lambda p: p[:, 0])
    rho = empirical_continuity_modulus(f, RADII, region=disk)
    h = square_grid.h[0]
    for r in RADII:
        assert r - h - 1e-12 <= rho(r) <= r + 1e-12


def test_continuity_modulus_of_square_root(square_grid):
    """f = |x|^{1/2}: ϱ_f(t) ≈ t^{1/2}, attained at the origin."""
    f = ScalarField.from_function(
        square_grid, lambda p: np.hypot(p[:, 0], p[:, 1]) ** 0.5
    )
    rho = empirical_continuity_modulus(f, RADII, region=disk)
    for r in RADII:
        assert rho(r) == pytest.approx(r**0.5, rel=0.02)


def test_mean_oscillation_of_linear_field_scales_with_radius(square_grid):
    """ω_f(r) ≈ c·r for f = x¹ with c near the full-disk value 4/(3π)."""
    f = ScalarField.from_function(square_grid, lambda p: p[:, 0])
    omega = empirical_mean_oscillation(f, RADII, region=disk)
    ratios = [omega(r) / r for r in RADII]
    assert max(ratios) / min(ratios) < 1.5
    assert all(0.3 < c < 0.8 for c in ratios)


def test_mean_oscillation_of_jump_stays_positive(square_grid):
    """A jump keeps ω_f(r) bounded below as r → 0."""
    f = ScalarField.from_function(square_grid, lambda p: np.sign(p[:, 0]))
    omega = empirical_mean_oscillation(f, RADII)
    assert omega(RADII[0]) > 0.5


def test_mean_oscillation_is_below_continuity_modulus(square_grid):
    """⨍|f − f̄| ≤ 2 sup_B |f − f(x)| ≤ 2ϱ_f(r) on every ball."""
    f = ScalarField.from_function(
        square_grid, lambda p: np.sin(3 * p[:, 0]) * p[:, 1] ** 2
    )
    omega = empirical_mean_oscillation(f, RADII, region=disk)
    rho = empirical_continuity_modulus(f, RADII, region=disk)
    r = np.array(RADII)
    assert np.all(omega(r) <= 2.0 * rho(r) + 1e-12)


def test_radius_below_four_cells_is_rejected(square_grid):
    """Radii must cover at least four grid cells."""
    f = ScalarField.from_function(square_grid, lambda p: p[:, 0])
    with pytest.raises(ResolutionError):
        empirical_mean_oscillation(f, [square_grid.h[0]])


def test_product_check_with_unit_factor(square_grid):
    """f ≡ 1 gives ω_{fg} = ω_g exactly."""
    one = ScalarField.from_function(square_grid, lambda p: np.ones(p.shape[0]))
    g = ScalarField.from_function(
        square_grid, lambda p: np.tanh(8 * p[:, 0]) * np.cos(5 * p[:, 1])
    )
    check = product_oscillation_check(one, g, RADII, stride=4)
    assert check.passed
    assert np.allclose(check.measured, check.bound)


def test_product_check_with_zero_field(square_grid):
    """g ≡ 0 makes both sides vanish."""
    f = ScalarField.from_function(square_grid, lambda p: 1.0 + 0.5 * p[:, 0])
    zero = ScalarField.from_function(square_grid, lambda p: np.zeros(p.shape[0]))
    check = product_oscillation_check(f, zero, RADII, stride=4)
    assert check.passed
    assert max(check.measured) == 0.0
    assert max(check.bound) == 0.0


def test_product_check_reports_slack(square_grid):
    """Hölder f times a smoothed checkerboard satisfies the product bound."""
    f = ScalarField.from_function(square_grid, lambda p: 1.0 + 0.5 * p[:, 0])

    def checkerboard(p: np.ndarray) -> np.ndarray:
        return np.tanh(6 * np.sin(4 * p[:, 0])) * np.tanh(6 * np.sin(4 * p[:, 1]))

    g = ScalarField.from_function(square_grid, checkerboard)
    check = product_oscillation_check(f, g, RADII, stride=4)
    assert check.passed
    assert all(s >= -check.tolerance * b for s, b in zip(check.slack, check.bound))
    assert check.to_csv().startswith("r,value,error_estimate")
