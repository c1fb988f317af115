"""Tests for the κ-series transform chain."""

import numpy as np
import pytest

from dinikit.exceptions import ParameterError
from dinikit.modulus import LogPowerModulus, PowerModulus, ZeroModulus
from dinikit.transforms import transform_chain


def test_zero_modulus_transforms_to_zero():
    """ω ≡ 0 gives four zero transforms."""
    chain = transform_chain(ZeroModulus())
    t = np.geomspace(1e-6, 0.25, 5)
    for omega in chain.as_tuple():
        assert np.all(omega(t) == 0.0)


def test_tilde_matches_direct_series():
    """ω(t) = t, β = 1/2, κ = 1/4 at t = 1/16: 1/8 + 1/4 + Σ_{i≥3} 2^{-i} = 5/8."""
    chain = transform_chain(PowerModulus(1.0), kappa=0.25, beta=0.5)
    assert chain.tilde(1.0 / 16.0) == pytest.approx(0.625, abs=1e-9)


def test_sharp_matches_brute_force_sup():
    """ω♯(t) = sup_{s∈[t,1]} (t/s)^β ω̃(s) against a dense search."""
    chain = transform_chain(PowerModulus(1.0), kappa=0.25, beta=0.5)
    t = 1.0 / 16.0
    s = np.geomspace(t, 1.0, 4001)
    brute = float(np.max((t / s) ** 0.5 * chain.tilde(s)))
    sharp = chain.sharp(t)
    assert sharp >= brute - 1e-9
    assert sharp == pytest.approx(brute, abs=1e-6)


def test_hat_and_star_match_their_definitions():
    """ω̂ = ω̃(t) + ω̃(4t) + ω♯(4t); ω* adds the two integral terms."""
    chain = transform_chain(PowerModulus(1.0), kappa=0.25, beta=0.5)
    t = 1.0 / 64.0
    tilde, sharp = chain.tilde, chain.sharp
    hat = tilde(t) + tilde(4 * t) + sharp(4 * t)
    assert chain.hat(t) == pytest.approx(hat, rel=1e-9)
    assert chain.star(t) >= chain.hat(t)


def test_transforms_are_monotone():
    """All four transforms are nondecreasing."""
    chain = transform_chain(LogPowerModulus(2.0))
    t = np.geomspace(1e-6, 0.25, 25)
    for omega in chain.as_tuple():
        values = omega(t)
        assert np.all(np.diff(values) >= -1e-10)


def test_star_recovers_power_rate():
    """ω(t) = t^α with β > α: ω*(t)/t^α stays bounded on [1e-4, 1/4]."""
    alpha = 0.3
    chain = transform_chain(PowerModulus(alpha), kappa=0.25, beta=0.5)
    t = np.geomspace(1e-4, 0.25, 12)
    ratio = chain.star(t) / t**alpha
    assert np.all(np.isfinite(ratio))
    assert ratio.max() / ratio.min() < 10.0


def test_star_vanishes_for_dini_input():
    """ω* → 0 as t → 0 when ω is Dini."""
    chain = transform_chain(LogPowerModulus(3.0))
    assert chain.metadata["vanishing_expected"]
    assert chain.star(1e-8) < 0.5 * chain.star(1e-3)


def test_non_dini_input_is_flagged():
    """A non-Dini input is recorded in the metadata, not raised."""
    chain = transform_chain(LogPowerModulus(1.0))
    assert chain.metadata["input_classification"] == "neither"
    assert not chain.metadata["vanishing_expected"]


def test_domain_is_rescaled_to_unit_interval():
    """Inputs on [0, a] are dilated onto [0, 1]."""
    chain = transform_chain(PowerModulus(1.0, a=0.5))
    assert chain.metadata["rescale_factor"] == 0.5


def test_series_truncation_is_certified():
    """The recorded tail bound is below the series tolerance."""
    chain = transform_chain(PowerModulus(0.5), kappa=0.25, beta=0.5)
    assert chain.metadata["series_tail_bound"] < 1e-10
    assert chain.metadata["series_terms"] > 1


@pytest.mark.parametrize(
    "kappa, beta", [(0.5, 0.5), (0.0, 0.5), (0.25, 1.0), (0.25, 0.0)]
)
def test_parameter_ranges(kappa, beta):
    """κ ∈ (0, 1/2) and β ∈ (0, 1)."""
    with pytest.raises(ParameterError):
        transform_chain(PowerModulus(1.0), kappa=kappa, beta=beta)
