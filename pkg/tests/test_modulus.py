"""Tests for moduli, Dini integrals and classification."""

import numpy as np
import pytest

from dinikit.exceptions import InvalidModulusError, ParameterError
from dinikit.modulus import (
    CallableModulus,
    IntegralModulus,
    LogPowerModulus,
    PowerModulus,
    ScaledModulus,
    SumModulus,
    TableModulus,
    ZeroModulus,
    check_doubling,
    classify,
    dini_integral,
    majorant_beta,
    modulus_from_dict,
    modulus_table_csv,
)


def test_modulus_vanishes_at_zero_and_rejects_negative_arguments():
    """ω(0) = 0 and negative arguments raise."""
    omega = PowerModulus(0.5)
    assert omega(0.0) == 0.0
    assert omega(0.25) == pytest.approx(0.5)
    with pytest.raises(InvalidModulusError):
        omega(-0.1)


def test_arguments_beyond_domain_are_clamped():
    """Evaluation past a holds the right-end value."""
    omega = PowerModulus(1.0, a=0.5)
    assert omega(2.0) == pytest.approx(0.5)


def test_log_power_matches_closed_form():
    """ω(t) = (ln(e/t))^{-γ}."""
    omega = LogPowerModulus(2.0)
    t = np.array([1e-6, 1e-3, 0.5, 1.0])
    assert np.allclose(omega(t), np.log(np.e / t) ** -2.0)


def test_table_modulus_interpolates_and_validates():
    """Tables interpolate linearly and reject decreasing values."""
    table = TableModulus([0.1, 0.2], [1.0, 2.0])
    assert table(0.05) == pytest.approx(0.5)
    assert table(0.15) == pytest.approx(1.5)

    with pytest.raises(InvalidModulusError):
        TableModulus([0.1, 0.2], [2.0, 1.0])
    with pytest.raises(InvalidModulusError):
        TableModulus([0.2, 0.1], [1.0, 2.0])


def test_running_max_keeps_raw_values():
    """from_running_max builds the monotone envelope and records the raw table."""
    table = TableModulus.from_running_max([0.1, 0.2, 0.3], [1.0, 0.5, 2.0])
    assert table.w.tolist() == [0.0, 1.0, 1.0, 2.0]
    assert table.raw.tolist() == [1.0, 0.5, 2.0]


def test_modulus_arithmetic():
    """Sums and scalar multiples evaluate pointwise; zero terms are dropped."""
    a, b = PowerModulus(1.0), PowerModulus(0.5)
    total = a + b
    assert isinstance(total, SumModulus)
    assert total(0.25) == pytest.approx(0.75)

    scaled = 3.0 * a
    assert isinstance(scaled, ScaledModulus)
    assert scaled(0.5) == pytest.approx(1.5)

    assert (a + ZeroModulus())(0.5) == pytest.approx(0.5)


def test_modulus_from_dict_rebuilds_composites():
    """to_dict/modulus_from_dict preserve values of composite moduli."""
    omega = SumModulus([PowerModulus(0.5, 2.0), 0.5 * LogPowerModulus(3.0)])
    rebuilt = modulus_from_dict(omega.to_dict())
    t = np.geomspace(1e-6, 1.0, 7)
    assert np.allclose(rebuilt(t), omega(t))

    with pytest.raises(InvalidModulusError):
        modulus_from_dict({"kind": "nonsense"})


@pytest.mark.parametrize(
    "omega, expected",
    [(PowerModulus(1.0), 1.0), (PowerModulus(0.5), 2.0), (LogPowerModulus(2.0), 1.0)],
)
def test_dini_integral_closed_forms(omega, expected):
    """∫₀¹ t/t = 1, ∫₀¹ t^{-1/2} = 2 and ∫₀¹ (ln(e/t))^{-2}/t = 1."""
    est = dini_integral(omega)
    assert not est.divergent
    assert est.value == pytest.approx(expected, abs=1e-8)


def test_dini_integral_flags_divergence():
    """(ln(e/t))^{-1} is not Dini."""
    est = dini_integral(LogPowerModulus(1.0))
    assert est.divergent
    assert est.to_dict()["value"] is None


def test_dini_integral_with_positive_lower_limit():
    """A truncated integral stays finite for a non-Dini modulus."""
    est = dini_integral(LogPowerModulus(1.0), lower=1e-3, upper=1.0)
    assert not est.divergent
    assert est.value == pytest.approx(np.log(1.0 + np.log(1e3)), rel=1e-8)


def test_quadrature_refinement_is_within_error_estimate():
    """Halving the panels changes the estimate by less than the reported error."""
    omega = LogPowerModulus(3.0)
    coarse = dini_integral(omega)
    fine = dini_integral(omega, refine=1)
    assert abs(coarse.value - fine.value) <= max(coarse.error, 1e-12)


@pytest.mark.parametrize(
    "omega, label",
    [
        (PowerModulus(0.3), "double_dini"),
        (LogPowerModulus(3.0), "double_dini"),
        (LogPowerModulus(2.0), "dini"),
        (LogPowerModulus(1.0), "neither"),
        (ZeroModulus(), "double_dini"),
    ],
)
def test_classify(omega, label):
    """Classification separates double Dini, Dini and neither."""
    report = classify(omega)
    assert report.classification == label
    if report.is_double_dini:
        assert report.is_dini


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_classify_is_scale_invariant(c):
    """classify(ω(c·)) = classify(ω)."""
    for omega in (PowerModulus(0.5), LogPowerModulus(2.0), LogPowerModulus(1.0)):
        dilated = classify(omega.dilate(c))
        assert dilated.classification == classify(omega).classification


def test_majorant_of_slow_power_is_identity():
    """β > α: the sup is attained at s = t."""
    omega = PowerModulus(0.3)
    tilde = majorant_beta(omega, 0.5)
    t = np.geomspace(1e-4, 1.0, 15)
    assert np.allclose(tilde(t), omega(t), atol=1e-9)


def test_majorant_of_fast_power_is_t_beta():
    """β < α, a = 1: the sup sits at s = a, giving t^β."""
    tilde = majorant_beta(PowerModulus(0.8), 0.5)
    t = np.geomspace(1e-4, 1.0, 15)
    assert np.allclose(tilde(t), t**0.5, atol=1e-9)


def test_majorant_of_table_matches_brute_force():
    """On a table the majorant equals the exhaustive sup over s ≥ t."""
    s = np.linspace(0.01, 1.0, 100)
    raw = s * (1.0 + 0.3 * np.sin(40 * s))
    table = TableModulus.from_running_max(s, raw)
    tilde = majorant_beta(table, 0.5)
    for t in (0.02, 0.1, 0.37, 0.8):
        cand = s[s >= t]
        brute = max(table(t), float(np.max((t / cand) ** 0.5 * table(cand))))
        assert tilde(t) == pytest.approx(brute, abs=1e-12)


def test_majorant_properties():
    """ω ≤ ω̃ and t^{-β}ω̃(t) nonincreasing."""
    omega = LogPowerModulus(2.0)
    beta = 0.5
    tilde = majorant_beta(omega, beta)
    t = np.geomspace(1e-5, 1.0, 40)
    values = tilde(t)
    assert np.all(values >= omega(t) - 1e-12)
    scaled = values / t**beta
    assert np.all(np.diff(scaled) <= 1e-9 * scaled[:-1])


def test_majorant_rejects_bad_beta():
    """β must lie in (0, 1]."""
    with pytest.raises(ParameterError):
        majorant_beta(PowerModulus(0.5), 1.5)


def test_majorant_rejects_non_doubling_modulus():
    """A modulus vanishing on [0, 1/2] has no positive lower doubling constant."""
    late = TableModulus([0.5, 1.0], [0.0, 1.0])
    assert check_doubling(late)[0] == 0.0
    with pytest.raises(InvalidModulusError):
        majorant_beta(late, 0.5)


def test_doubling_constants_of_power():
    """t^α: ω(s)/ω(t) over s ∈ [t/2, t] spans [2^{-α}, 1]."""
    c1, c2 = check_doubling(PowerModulus(0.5))
    assert c1 == pytest.approx(2**-0.5, rel=1e-12)
    assert c2 == pytest.approx(1.0)
    assert check_doubling(ZeroModulus()) == (1.0, 1.0)


def test_doubling_constants_of_non_monotone_modulus():
    """Wiggles make ω(s) exceed ω(t) for some s < t, so c₂ > 1."""

    def wiggly(t):
        return t * (1.0 + 0.5 * np.sin(40.0 * t))

    c1, c2 = check_doubling(CallableModulus(wiggly))
    assert 0.0 < c1 < 1.0
    assert c2 > 1.0


def test_integral_modulus_of_power():
    """∫₀ᵗ s^{α−1} ds = t^α/α, for scalar and tabulated evaluation."""
    integral = IntegralModulus(PowerModulus(0.5))
    assert integral(0.01) == pytest.approx(0.2, rel=1e-8)
    t = np.geomspace(1e-6, 1.0, 12)
    assert np.allclose(integral(t), 2.0 * np.sqrt(t), rtol=1e-4)


def test_integral_modulus_of_non_dini_is_infinite():
    """The integral of a non-Dini modulus diverges everywhere."""
    integral = IntegralModulus(LogPowerModulus(1.0))
    assert np.isinf(integral(0.1))


def test_modulus_table_csv():
    """CSV carries (r, value, error_estimate) rows."""
    text = modulus_table_csv([0.1, 0.2], [1.0, 2.0])
    lines = text.strip().split("\n")
    assert lines[0] == "r,value,error_estimate"
    assert len(lines) == 3
    assert lines[1].startswith("1.000000000000e-01,1.000000000000e+00")
