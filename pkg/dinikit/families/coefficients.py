"""Coefficient families: constant, Hölder, Dini-log and non-Dini-log.

The rough families perturb a¹¹ by ``amp·φ(|x¹ − x₀|)`` so the continuity
modulus of A is ``amp·φ`` (φ nondecreasing, φ(0) = 0, φ ≤ 1 on the unit
patch). The perturbation is nonnegative, so λ is kept by construction.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..exceptions import ParameterError
from ..fields import Grid2D, as_points
from ..modulus import (
    LogPowerModulus,
    Modulus,
    PowerModulus,
    ScaledModulus,
    ZeroModulus,
    modulus_from_dict,
)
from ..registry import family, get_family
from ..solvers import CoefficientField

logger = logging.getLogger(__name__)


def _perturbed(
    name: str,
    profile: Callable[[np.ndarray], np.ndarray],
    modulus: Modulus,
    amp: float,
    lam: float,
    x0: float,
    params: Dict[str, Any],
) -> CoefficientField:
    if lam <= 0:
        raise ParameterError(f"lam must be positive, got {lam}")
    if amp < 0 or amp > 0.5 * lam:
        raise ParameterError(
            f"Amplitude {amp} would violate ellipticity; cap is λ/2 = {0.5 * lam}"
        )

    def A(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        out = np.zeros((p.shape[0], 2, 2))
        t = np.minimum(np.abs(p[:, 0] - x0), 1.0)
        out[:, 0, 0] = lam + amp * profile(t)
        out[:, 1, 1] = lam
        return out

    omega = ScaledModulus(modulus, amp) if amp > 0 else ZeroModulus()
    return CoefficientField(
        A=A,
        symmetric=True,
        name=name,
        params={**params, "amp": amp, "lam": lam, "x0": x0, "modulus": omega.to_dict()},
    )


@family("coefficient")
def constant(matrix: Optional[List[List[float]]] = None) -> CoefficientField:
    """Constant coefficients (identity by default)."""
    M = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
    field = CoefficientField.constant(M)
    field.params["modulus"] = ZeroModulus().to_dict()
    return field


@family("coefficient")
def holder(
    alpha: float = 0.5, amp: float = 0.2, lam: float = 1.0, x0: float = 0.0
) -> CoefficientField:
    """a¹¹ = λ + amp·|x¹ − x₀|^α."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return _perturbed(
        "holder",
        lambda t: t**alpha,
        PowerModulus(alpha),
        amp,
        lam,
        x0,
        {"alpha": alpha},
    )


def _log_profile(gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    def profile(t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.log(np.e / t[pos]) ** (-gamma)
        return out

    return profile


@family("coefficient", name="dini-log")
def dini_log(
    gamma: float = 2.0, amp: float = 0.2, lam: float = 1.0, x0: float = 0.0
) -> CoefficientField:
    """a¹¹ = λ + amp·(ln(e/|x¹ − x₀|))^{−γ}, γ > 1."""
    if gamma <= 1.0:
        raise ParameterError(f"dini-log needs gamma > 1, got {gamma}")
    return _perturbed(
        "dini-log",
        _log_profile(gamma),
        LogPowerModulus(gamma),
        amp,
        lam,
        x0,
        {"gamma": gamma},
    )


@family("coefficient", name="non-dini-log")
def non_dini_log(
    gamma: float = 1.0, amp: float = 0.2, lam: float = 1.0, x0: float = 0.0
) -> CoefficientField:
    """a¹¹ = λ + amp·(ln(e/|x¹ − x₀|))^{−γ}, 0 < γ ≤ 1."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"non-dini-log needs gamma in (0, 1], got {gamma}")
    return _perturbed(
        "non-dini-log",
        _log_profile(gamma),
        LogPowerModulus(gamma),
        amp,
        lam,
        x0,
        {"gamma": gamma},
    )


def coefficient_modulus(coeffs: CoefficientField) -> Modulus:
    """Nominal ω_A recorded by the generating family (zero when unknown)."""
    data = coeffs.params.get("modulus")
    return modulus_from_dict(data) if data else ZeroModulus()


def generate_coefficients(
    family_name: str,
    params: Optional[Dict[str, Any]] = None,
    grid: Optional[Grid2D] = None,
) -> CoefficientField:
    """Build a coefficient field from a registered family.

    When ``grid`` is given, ellipticity is checked on its active nodes.
    """
    coeffs = get_family("coefficient", family_name)(**(params or {}))
    if grid is not None:
        lam, Lam = coeffs.ellipticity(grid.active_points())
        logger.debug(
            f"{family_name} coefficients: λ = {lam:.3g}, Λ = {Lam:.3g} "
            f"on {grid.mask.sum()} nodes"
        )
    return coeffs
