"""Tests for the conormal and mixed solvers, reflection and corrector tools."""

import numpy as np
import pytest

from dinikit.exceptions import ParameterError, ResolutionError, SingularSystemError
from dinikit.fields import Grid2D, ScalarField
from dinikit.solvers import (
    Ball,
    Box,
    CoefficientField,
    DiscreteProblem,
    DiscreteSolution,
    HalfBall,
    SmoothHalfBall,
    annulus_decay,
    evenness_defect,
    flat_trace_derivative,
    frozen_corrector,
    lipschitz_ratio,
    reflect_extend,
    shape_from_dict,
    solve_conormal,
    solve_dirichlet_ball,
    solve_mixed_nd,
    third_derivative_identity,
    weak11_profile,
    weak11_stable,
)


def unit_flux(points):
    return np.column_stack([np.ones(points.shape[0]), np.zeros(points.shape[0])])


@pytest.fixture
def anisotropic():
    return CoefficientField.constant([[2.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def unit_flux_solution(anisotropic, test_config):
    return solve_conormal(
        anisotropic,
        HalfBall((0.0, 0.0), 1.0),
        resolution=test_config.TEST_GRID,
        g=unit_flux,
    )


# Shapes and coefficients ----------------------------------------------------


def test_smooth_half_ball_sits_between_half_balls(rng):
    """B⁺(R/2) ⊂ 𝒟 ⊂ B⁺(R)."""
    shape = SmoothHalfBall((0.0, 0.0), 1.0)
    pts = rng.uniform(-1.0, 1.0, (4000, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    r = np.linalg.norm(pts, axis=1)
    inside = shape.contains(pts)
    assert np.all(inside[r < 0.5])
    assert not np.any(inside[r > 1.0])


def test_shape_round_trip_through_dict():
    """Shapes rebuild from their dict form."""
    for shape in (Box(0, 1, 0, 2), Ball((0.5, 0.0), 2.0), HalfBall((0.0, 0.0), 0.5)):
        rebuilt = shape_from_dict(shape.to_dict())
        assert rebuilt.bounds == shape.bounds
    with pytest.raises(ParameterError):
        shape_from_dict({"kind": "torus"})


def test_coefficient_validation():
    """Non-elliptic and malformed coefficients are rejected."""
    with pytest.raises(ParameterError):
        indefinite = CoefficientField.constant([[1.0, 0.0], [0.0, -1.0]])
        indefinite.ellipticity(np.zeros((1, 2)))
    with pytest.raises(ParameterError):
        CoefficientField.constant([[1.0, 0.0, 0.0]])

    coeffs = CoefficientField.constant([[2.0, 0.0], [0.0, 1.0]])
    lam, Lam = coeffs.ellipticity(np.zeros((3, 2)))
    assert lam == pytest.approx(1.0)
    assert Lam == pytest.approx(np.sqrt(5.0))


# Conormal problem ------------------------------------------------------------


def test_unit_flux_is_solved_exactly(unit_flux_solution):
    """A∇u = (1, 0) has the Q1-exact solution u = x/2 + const."""
    sol = unit_flux_solution
    grad = sol.gradient.values
    assert np.nanmax(np.abs(grad[..., 0] - 0.5)) < 1e-8
    assert np.nanmax(np.abs(grad[..., 1])) < 1e-8
    assert abs(sol.info["lagrange_multiplier"]) < 1e-8
    assert sol.residual < 1e-8


def test_pure_neumann_without_pinning_is_singular(anisotropic):
    """No zero-order term and no mean constraint is refused."""
    with pytest.raises(SingularSystemError):
        solve_conormal(
            anisotropic, HalfBall(), resolution=8, g=unit_flux, pin_mean=False
        )


def test_conormal_with_zero_order_term_converges():
    """Δu − u = f with D_νu = 0 on the unit square, u = cos(πx)cos(πy)."""

    def exact(p):
        return np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])

    coeffs = CoefficientField.constant(np.eye(2))
    coeffs.c = lambda p: -np.ones(p.shape[0])

    def f(p):
        return -(2.0 * np.pi**2 + 1.0) * exact(p)

    errors = [
        solve_conormal(coeffs, Box(), resolution=n, f=f).max_error(exact)
        for n in (16, 32)
    ]
    assert errors[1] < 5e-3
    assert errors[1] < errors[0] / 3.0


def test_robin_data_reproduces_constants():
    """D_νu + u = 1 with no interior source gives u ≡ 1."""
    coeffs = CoefficientField(
        A=CoefficientField.constant(np.eye(2)).A,
        a0=lambda p: np.ones(p.shape[0]),
    )
    sol = solve_conormal(coeffs, Box(), resolution=12, g0=lambda p: np.ones(p.shape[0]))
    assert sol.max_error(lambda p: np.ones(p.shape[0])) < 1e-10


def test_conormal_solution_exports_csv(unit_flux_solution):
    """CSV rows cover every active node."""
    text = unit_flux_solution.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "x,y,u,ux,uy,uxx,uxy,uyy"
    assert len(lines) - 1 == int(unit_flux_solution.grid.mask.sum())


# Nondivergence problems ------------------------------------------------------


def test_mixed_problem_with_paraboloid():
    """Δu = −4 on B⁺ with u = 0 on the arc and D_n u = 0 on the flat part."""

    def exact(p):
        return 1.0 - p[:, 0] ** 2 - p[:, 1] ** 2

    sol = solve_mixed_nd(
        CoefficientField.constant(np.eye(2)),
        f=lambda p: np.full(p.shape[0], -4.0),
        n=32,
    )
    assert sol.max_error(exact) < 1e-2


def test_mixed_problem_with_mixed_entries():
    """An even solution is unaffected by a¹²."""

    def exact(p):
        return 1.0 - p[:, 0] ** 2 - p[:, 1] ** 2

    coeffs = CoefficientField.constant([[1.0, 0.3], [0.3, 2.0]])
    sol = solve_mixed_nd(coeffs, f=lambda p: np.full(p.shape[0], -6.0), n=32)
    assert sol.max_error(exact) < 1e-2


def test_dirichlet_ball_with_harmonic_data():
    """Δu = 0 on B(0, 1) with u = x² − y² + 1 on the circle."""

    def exact(p):
        return p[:, 0] ** 2 - p[:, 1] ** 2 + 1.0

    sol = solve_dirichlet_ball(
        CoefficientField.constant(np.eye(2)), n=24, dirichlet=exact
    )
    assert sol.max_error(exact) < 1e-2


def test_nondivergence_solvers_check_their_inputs():
    """Full balls, flat domains and non-symmetric matrices are matched to the right solver."""
    laplace = CoefficientField.constant(np.eye(2))
    with pytest.raises(ParameterError):
        solve_dirichlet_ball(laplace, domain=HalfBall())
    with pytest.raises(ParameterError):
        solve_mixed_nd(CoefficientField.constant([[1.0, 0.5], [0.0, 1.0]]), n=8)


# Reflection ------------------------------------------------------------------


def test_reflection_normalizes_and_flips_mixed_entries():
    """Â = Ā/āⁿⁿ above the flat line, off-diagonals negated below."""
    coeffs = CoefficientField.constant([[2.0, 0.5], [0.5, 4.0]])
    reflected = reflect_extend(coeffs, lambda p: p[:, 1] + 1.0)
    assert reflected.scale == 4.0

    A = reflected.coeffs.matrix(np.array([[0.1, 0.3], [0.1, -0.3], [0.1, 0.0]]))
    assert np.allclose(A[0], [[0.5, 0.125], [0.125, 1.0]])
    assert np.allclose(A[1], [[0.5, -0.125], [-0.125, 1.0]])
    assert A[2, 0, 1] == 0.0

    assert reflected.f(np.array([[0.2, -0.3]]))[0] == pytest.approx(1.3 / 4.0)


def test_reflection_requires_constant_coefficients():
    """Variable Ā cannot be reflected."""
    coeffs = CoefficientField(
        A=lambda p: (1.0 + p[:, 0] ** 2)[:, None, None] * np.eye(2)[None]
    )
    with pytest.raises(ParameterError):
        reflect_extend(coeffs, lambda p: np.zeros(p.shape[0]))


def test_reflected_solution_is_even_with_flat_trace():
    """The full-ball solution of the reflected problem is even in y and D_yû → 0 on T."""
    coeffs = CoefficientField.constant([[1.0, 0.4], [0.4, 2.0]])
    reflected = reflect_extend(coeffs, lambda p: np.ones(p.shape[0]) + p[:, 0])

    traces = []
    for n in (16, 32):
        sol = solve_dirichlet_ball(reflected.coeffs, reflected.f, n=n)
        assert evenness_defect(sol) < 1e-9
        traces.append(flat_trace_derivative(sol))
    assert traces[1] < 0.75 * traces[0]


@pytest.mark.slow
def test_reflection_refinement_study():
    """a^{n1} = 0.3: evenness to 10(1e-10 + h²‖f̂‖∞) and D_yû on T shrinking by 1.8 per halving."""
    coeffs = CoefficientField.constant([[1.0, 0.3], [0.3, 1.0]])
    reflected = reflect_extend(coeffs, lambda p: np.ones(p.shape[0]) + p[:, 0])

    traces = []
    for n in (64, 128, 256):
        sol = solve_dirichlet_ball(reflected.coeffs, reflected.f, n=n)
        h = max(sol.grid.h)
        f_sup = float(np.max(np.abs(reflected.f(sol.grid.active_points()))))
        assert evenness_defect(sol) <= 10.0 * (1e-10 + h**2 * f_sup)
        traces.append(flat_trace_derivative(sol))
    assert traces[0] >= 1.8 * traces[1]
    assert traces[1] >= 1.8 * traces[2]


# Corrector and profiles ------------------------------------------------------


def test_frozen_corrector_vanishes_for_constant_coefficients(
    anisotropic, unit_flux_solution
):
    """Frozen coefficients equal the true ones, so w ≡ 0."""
    report = frozen_corrector(unit_flux_solution, anisotropic, center=0.0, r=0.25, n=16)
    assert report.omega_A == pytest.approx(0.0, abs=1e-14)
    assert report.p_mean < 1e-8
    assert report.constant == 0.0
    assert report.to_dict()["mode"] == "divergence"


def test_nondivergence_corrector_vanishes_for_constant_data():
    """ā = a and f = f̄ leave nothing for w to absorb."""
    coeffs = CoefficientField.constant(np.eye(2))

    def f(p: np.ndarray) -> np.ndarray:
        return np.full(p.shape[0], -4.0)

    sol = solve_mixed_nd(coeffs, f=f, n=32)
    report = frozen_corrector(
        sol, coeffs, center=0.0, r=0.25, mode="nondivergence", f=f, n=16
    )
    assert report.p_mean < 1e-8
    assert report.constant == 0.0


def test_corrector_rejects_unresolved_radius(anisotropic, unit_flux_solution):
    """r must span at least four cells of the solution grid."""
    with pytest.raises(ResolutionError):
        frozen_corrector(unit_flux_solution, anisotropic, center=0.0, r=0.05)
    with pytest.raises(ParameterError):
        frozen_corrector(
            unit_flux_solution, anisotropic, center=0.0, r=0.25, mode="other", n=8
        )


def test_weak11_profile(unit_flux_solution):
    """C(t) is nonnegative, vanishes above sup|Du| and is stable against itself."""
    table = weak11_profile(unit_flux_solution, data_l1=1.0, thresholds=[0.1, 0.4, 1.0])
    assert all(c >= 0 for c in table.constants)
    assert table.constants[-1] == 0.0
    assert weak11_stable(table, table)

    empty = weak11_profile(unit_flux_solution, data_l1=0.0, thresholds=[0.1])
    assert empty.sup == 0.0
    with pytest.raises(ParameterError):
        weak11_profile(unit_flux_solution, data_l1=1.0, thresholds=[0.1], order=3)


def test_annulus_decay_levels(unit_flux_solution):
    """Radii double and the outside mass shrinks."""
    rows = annulus_decay(unit_flux_solution, (0.0, 0.0), 0.05, data_l1=1.0, levels=3)
    radii = [r for r, _ in rows]
    masses = [m for _, m in rows]
    assert radii == pytest.approx([0.1, 0.2, 0.4])
    assert masses[0] >= masses[1] >= masses[2] > 0


def test_lipschitz_ratio_is_finite(unit_flux_solution):
    """‖Du‖ over the half ball is controlled by the p-mean of u."""
    ratio = lipschitz_ratio(unit_flux_solution, p=0.5)
    assert np.isfinite(ratio)
    assert ratio > 0


def test_third_derivative_identity_for_harmonic_cubic():
    """D_{yym}v = −D_{xxm}v for v = x³ − 3xy²."""
    grid = Grid2D.uniform((-1.0, 1.0, 0.0, 1.0), (41, 21))
    field = ScalarField.from_function(
        grid, lambda p: p[:, 0] ** 3 - 3.0 * p[:, 0] * p[:, 1] ** 2
    )
    problem = DiscreteProblem(
        "mixed", HalfBall(), CoefficientField.constant(np.eye(2)), 20
    )
    solution = DiscreteSolution(problem, field, residual=0.0)
    defect = third_derivative_identity(
        solution, np.eye(2), center=(0.0, 0.5), radius=0.3
    )
    assert defect < 1e-8
