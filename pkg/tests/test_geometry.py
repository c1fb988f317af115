"""Tests for graph domains, the regularized distance, Dini extension and flattening."""

import numpy as np
import pytest

from dinikit.exceptions import ParameterError
from dinikit.geometry import (
    GraphDomain,
    MollifierSpec,
    dini_extension,
    flatten_by_distance,
    h_field_modulus_check,
    mollified_lift,
    regularized_distance,
    regularized_distance_derivative_report,
    transform_operator,
)
from dinikit.modulus import PowerModulus


def identity_matrix(points):
    return np.broadcast_to(np.eye(2), (points.shape[0], 2, 2)).copy()


def test_mollifier_rule_is_normalized():
    """Quadrature weights sum to one for both profiles."""
    assert MollifierSpec().normalization_error < 1e-12
    assert MollifierSpec(profile="bump").normalization_error < 1e-4


def test_mollifier_rule_cancels_first_moments():
    """∫ y ζ(y) dy = 0 on the quadrature nodes."""
    nodes, weights = MollifierSpec().rule
    assert np.allclose(weights @ nodes, 0.0, atol=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [{"angular_nodes": 33}, {"radial_nodes": 8}, {"profile": "box"}],
)
def test_mollifier_rejects_bad_quadrature(kwargs):
    """Odd angular counts, coarse rules and unknown profiles are rejected."""
    with pytest.raises(ParameterError):
        MollifierSpec(**kwargs)


def test_mollified_lift_preserves_affine_functions(rng):
    """Mass one and vanishing first moments leave affine ψ₀ unchanged."""
    zeta = MollifierSpec()
    pts = rng.uniform(-1.0, 1.0, (50, 2))
    t = rng.uniform(0.0, 0.5, 50)

    def affine(p):
        return 0.3 + 2.0 * p[:, 0] - p[:, 1]

    assert np.allclose(mollified_lift(affine, zeta, t, pts), affine(pts), atol=1e-12)

    def quadratic(p):
        return p[:, 0] ** 2 + p[:, 0] * p[:, 1]

    lifted = mollified_lift(quadratic, zeta, 0.0, pts)
    assert np.allclose(lifted, quadratic(pts), atol=1e-12)


def test_graph_domain_validation():
    """γ(0) = 0 and |γ'| < 1/2 on the patch are required."""
    with pytest.raises(ParameterError):
        GraphDomain.parabolic(c=1.0, b=0.5)
    with pytest.raises(ParameterError):
        GraphDomain(
            gamma=lambda s: np.asarray(s, dtype=float) * 0.0 + 0.1,
            dgamma=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
            rho_dgamma=PowerModulus(1.0),
            b=0.5,
        )
    with pytest.raises(ParameterError):
        GraphDomain.flat(b=0.0)


def test_graph_domain_basics():
    """K, δ, the outward normal and membership for a parabola."""
    domain = GraphDomain.parabolic(c=0.25, b=0.5)
    assert domain.K == pytest.approx(np.sqrt(1.25), rel=1e-9)
    assert domain.delta == pytest.approx(1.0 / domain.K)

    nu = domain.outward_normal(np.array([0.0, 0.4]))
    assert np.allclose(nu[0], [0.0, -1.0])
    assert np.allclose(np.linalg.norm(nu, axis=1), 1.0)
    assert nu[1, 0] > 0

    inside = domain.contains(np.array([[0.0, 0.1], [0.2, 0.0], [0.6, 1.0]]))
    assert inside.tolist() == [True, False, False]


def test_distance_to_boundary_of_flat_domain():
    """dist(x, {x² = 0}) = x²."""
    domain = GraphDomain.flat()
    pts = np.array([[0.0, 0.3], [0.4, 0.05], [-0.2, -0.1]])
    assert np.allclose(domain.distance_to_boundary(pts), pts[:, 1], atol=1e-12)


def test_regularized_distance_on_flat_domain():
    """K = 1 and odd moments cancel, so ψ = x²/2."""
    domain = GraphDomain.flat()
    pts = np.array([[0.0, 0.2], [0.3, 0.01], [-0.5, 0.7]])
    psi = regularized_distance(domain, MollifierSpec(), pts)
    assert np.allclose(psi, pts[:, 1] / 2.0, atol=1e-12)


def test_regularized_distance_vanishes_on_boundary():
    """ψ = 0 on ∂Ω."""
    domain = GraphDomain.parabolic()
    psi = regularized_distance(domain, MollifierSpec(), domain.boundary_points(11))
    assert np.all(psi == 0.0)


def test_regularized_distance_brackets_distance():
    """ψ ≤ dist ≤ 3K²ψ and 1/3 ≤ Kψ/ψ₀ ≤ 1 at sampled interior points."""
    domain = GraphDomain.parabolic(c=0.25, b=0.5)
    pts = domain.sample_interior(200, depth=0.1, seed=3)
    psi, history = regularized_distance(
        domain, MollifierSpec(), pts, return_history=True
    )
    dist = domain.distance_to_boundary(pts)
    K = domain.K

    assert np.all(psi > 0)
    assert np.all(domain.delta * K * psi <= dist * (1 + 1e-9))
    assert np.all(dist <= 3.0 * K / domain.delta * psi * (1 + 1e-9))

    ratio = K * psi / domain.psi0(pts)
    assert np.all(ratio >= 1.0 / 3.0 - 1e-12)
    assert np.all(ratio <= 1.0 + 1e-12)
    assert history.iterations <= 60


def test_fixed_point_iteration_contracts():
    """Successive gaps shrink by at least half."""
    domain = GraphDomain.power(alpha=0.5, c=1.0, b=0.1)
    pts = domain.sample_interior(50, depth=0.05, seed=1)
    _, history = regularized_distance(domain, MollifierSpec(), pts, return_history=True)
    gaps = history.gaps
    for prev, nxt in zip(gaps, gaps[1:]):
        assert nxt <= (0.5 + 1e-12) * prev + 1e-15


def test_regularized_distance_rejects_points_outside_patch():
    """Points must satisfy |x¹| ≤ 2b."""
    domain = GraphDomain.parabolic(b=0.5)
    with pytest.raises(ParameterError):
        regularized_distance(domain, MollifierSpec(), np.array([[1.5, 0.2]]))


@pytest.mark.slow
def test_regularized_distance_derivatives_are_controlled():
    """|Dψ| ≤ 1 and the scaled second and third derivatives stay finite."""
    domain = GraphDomain.parabolic(c=0.25, b=0.5)
    pts = domain.sample_interior(6, depth=0.05, seed=7, width=0.1)
    report = regularized_distance_derivative_report(domain, MollifierSpec(), pts)
    sup = report.sup
    assert sup["grad_norm"] <= 1.0 + 1e-4
    assert np.isfinite(sup["ratio2"])
    assert np.isfinite(sup["ratio3"])
    assert report.to_csv().startswith("x,y,psi,grad_norm")


def test_derivative_report_rejects_large_steps():
    """FD steps above ψ/10 are refused."""
    with pytest.raises(ParameterError):
        regularized_distance_derivative_report(
            GraphDomain.flat(),
            MollifierSpec(),
            np.array([[0.0, 0.1]]),
            step_fraction=0.2,
        )


def test_extension_reproduces_linear_function():
    """Mollifying x¹ with a symmetric kernel returns x¹ exactly."""
    domain = GraphDomain.parabolic(c=0.25, b=0.5)
    ext = dini_extension(lambda p: p[:, 0], domain, MollifierSpec())
    pts = domain.sample_interior(20, depth=0.1, seed=2)
    assert np.allclose(ext(pts), pts[:, 0], atol=1e-12)

    report = ext.report(pts)
    assert report.boundary_error < 1e-12
    assert report.norm_ratio == pytest.approx(1.0, rel=1e-6)


def test_extension_agrees_with_boundary_values():
    """ũ = u on ∂Ω for a curved boundary and nonlinear data."""
    domain = GraphDomain.parabolic(c=0.25, b=0.5)
    ext = dini_extension(
        lambda p: np.sin(p[:, 0]) + p[:, 1] ** 2, domain, MollifierSpec()
    )
    bpts = domain.boundary_points(21, width=0.25)
    assert np.allclose(ext(bpts), np.sin(bpts[:, 0]) + bpts[:, 1] ** 2, atol=1e-12)


def flat_flattening(resolution):
    return flatten_by_distance(
        GraphDomain.flat(b=1.0),
        x0=0.0,
        s=0.2,
        A=identity_matrix,
        f=lambda p: np.ones(p.shape[0]),
        u=lambda p: p[:, 0] ** 2 + p[:, 1],
        resolution=resolution,
    )


def test_flattening_of_flat_domain():
    """z = (x¹, x²/2): no h-field, boundary maps to {zⁿ = 0}, map inverts."""
    result = flat_flattening(9)
    assert 0 < result.s0 <= 0.1
    assert result.boundary_image_error < 1e-12
    assert np.max(np.abs(result.h)) < 1e-5
    assert np.allclose(result.f_tilde, 1.0, atol=1e-5)
    assert np.allclose(result.a_tilde[:, 0, 0], 1.0, atol=1e-6)
    assert np.allclose(result.a_tilde[:, 1, 1], 0.25, atol=1e-6)
    assert result.map.round_trip_error(result.x_points) < 1e-10
    assert result.to_dict()["nodes"] == int(result.grid.mask.sum())


def test_transform_operator_through_flattening():
    """â = J Jᵀ and b̂ = 0 for the Laplacian under a linear map."""
    result = flat_flattening(9)
    pts = result.x_points[:5]
    a_hat, b_hat = transform_operator(result.map, identity_matrix, pts)
    assert np.allclose(a_hat[:, 0, 0], 1.0, atol=1e-6)
    assert np.allclose(a_hat[:, 1, 1], 0.25, atol=1e-6)
    assert np.allclose(b_hat, 0.0, atol=1e-3)


def test_h_field_check_on_flat_domain():
    """A vanishing h-field passes the modulus check at two resolutions."""
    check = h_field_modulus_check(
        flat_flattening(9), flat_flattening(13), PowerModulus(1.0), pairs=500
    )
    assert check.passed
    assert check.to_dict()["passed"] is True
