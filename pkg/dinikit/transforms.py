"""The κ-series transform chain ω ↦ (ω̃, ω♯, ω̂, ω*) used by the decay estimates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .exceptions import ParameterError
from .modulus import (
    ClampedModulus,
    DilatedModulus,
    IntegralModulus,
    MajorantModulus,
    Modulus,
    SumModulus,
    classify,
)

logger = logging.getLogger(__name__)

SERIES_TOLERANCE = 1e-10
HAT_RIGHT_END = 0.25


class TildeModulus(Modulus):
    """ω̃(t) = Σ_{i≥1} κ^{iβ} ω(min(κ^{-i}t, 1)).

    Defined for every t ≥ 0 through its own series; arguments beyond 1 hold
    every term at ω(1).
    """

    kind = "tilde"

    def __init__(
        self, base: Modulus, kappa: float, beta: float, tol: float = SERIES_TOLERANCE
    ) -> None:
        super().__init__(np.inf)
        self.base = base
        self.kappa = float(kappa)
        self.beta = float(beta)
        self.log_step = -np.log(self.kappa)

        w1 = float(base(1.0))
        q = self.kappa**self.beta
        terms = 1
        while w1 > 0 and q**terms * w1 / (1.0 - q) >= tol:
            terms += 1
        self.terms = terms
        self.tail_bound = q ** (terms + 1) * w1 / (1.0 - q)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        i = np.arange(1, self.terms + 1, dtype=float)
        shifted = s[..., None] - i * self.log_step
        inside = self.base.at_log(np.maximum(shifted, 0.0))
        weights = self.kappa ** (i * self.beta)
        return np.sum(weights * inside, axis=-1)

    def kinks(self, lo: float, hi: float) -> np.ndarray:
        """Log-coordinates of the switch points κ^i inside [lo, hi]."""
        first = max(1, int(np.floor(lo / self.log_step)))
        last = int(np.ceil(hi / self.log_step)) + 1
        return np.arange(first, last + 1) * self.log_step

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "kappa": self.kappa,
            "beta": self.beta,
            "base": self.base.to_dict(),
        }

    def is_zero(self) -> bool:
        return self.base.is_zero()


@dataclass
class TransformChain:
    """The four transformed moduli together with their metadata."""

    tilde: Modulus
    sharp: Modulus
    hat: Modulus
    star: Modulus
    metadata: Dict[str, Any] = field(default_factory=dict)

    def as_tuple(self) -> tuple:
        return self.tilde, self.sharp, self.hat, self.star

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tilde": self.tilde.to_dict(),
            "sharp": self.sharp.to_dict(),
            "hat": self.hat.to_dict(),
            "star": self.star.to_dict(),
            "metadata": self.metadata,
        }


def normalize_domain(omega: Modulus) -> tuple:
    """Rescale ω onto [0, 1]; returns (modulus, factor) with ω₁(t) = ω(factor·t)."""
    if not np.isfinite(omega.a) or omega.a == 1.0:
        return omega, 1.0
    return DilatedModulus(omega, omega.a), omega.a


def transform_chain(
    omega: Modulus, kappa: float = 0.25, beta: float = 0.5
) -> TransformChain:
    """Build ω̃, ω♯, ω̂ and ω* for the given κ and β.

    Args:
        omega: Input modulus; rescaled to [0, 1] first.
        kappa: Dyadic ratio in (0, 1/2).
        beta: Hölder weight in (0, 1).

    Returns:
        TransformChain whose ``metadata`` records the rescale factor, the
        series length, the Dini classification of the input and whether ω*
        is expected to vanish at 0.
    """
    if not 0.0 < kappa < 0.5:
        raise ParameterError(f"kappa must lie in (0, 1/2), got {kappa}")
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")

    base, factor = normalize_domain(omega)
    tilde = TildeModulus(base, kappa, beta)
    sharp = MajorantModulus(tilde, beta, right_end=1.0, extra_log_points=tilde.kinks)

    hat = ClampedModulus(
        SumModulus([tilde, DilatedModulus(tilde, 4.0), DilatedModulus(sharp, 4.0)]),
        HAT_RIGHT_END,
    )
    integral = IntegralModulus(tilde, a=1.0)
    star = ClampedModulus(
        SumModulus(
            [hat, integral, DilatedModulus(tilde, 4.0), DilatedModulus(integral, 4.0)]
        ),
        HAT_RIGHT_END,
    )

    report = classify(base)
    metadata = {
        "kappa": kappa,
        "beta": beta,
        "rescale_factor": factor,
        "series_terms": tilde.terms,
        "series_tail_bound": tilde.tail_bound,
        "input_classification": report.classification,
        "vanishing_expected": report.is_dini,
    }
    if not report.is_dini:
        logger.warning("Input modulus is not Dini; ω* need not vanish at 0")
    return TransformChain(
        tilde=tilde, sharp=sharp, hat=hat, star=star, metadata=metadata
    )
