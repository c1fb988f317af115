"""Right-hand sides, boundary data and manufactured solutions."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from typing_extensions import Literal

from ..exceptions import ParameterError
from ..fields import PointFunction, as_points
from ..modulus import Modulus, PowerModulus, SumModulus, ZeroModulus
from ..registry import family
from ..solvers import CoefficientField
from .coefficients import coefficient_modulus


@dataclass
class DataSet:
    """Equation data with an optional exact solution and its derivatives.

    ``kind`` selects the solver: ``mixed`` for a^{ij}D_{ij}u = f with
    Dirichlet data on the curved part, ``conormal`` for the divergence form
    with conormal data g⃗·ν + g⁰.
    """

    name: str
    kind: Literal["mixed", "conormal"]
    f: Optional[PointFunction] = None
    g: Optional[Callable[[np.ndarray], np.ndarray]] = None
    g0: Optional[PointFunction] = None
    dirichlet: Optional[PointFunction] = None
    exact: Optional[PointFunction] = None
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    omega_data: Modulus = field(default_factory=ZeroModulus)
    params: Dict[str, Any] = field(default_factory=dict)

    def oblique_data(
        self,
        beta: Callable[[np.ndarray], np.ndarray],
        beta0: Optional[PointFunction] = None,
    ) -> PointFunction:
        """g = β⃗·∇u + β⁰u for the exact solution."""
        if self.gradient is None or self.exact is None:
            raise ParameterError(f"Data family '{self.name}' has no exact solution")
        exact, grad = self.exact, self.gradient

        def g(points: np.ndarray) -> np.ndarray:
            p = as_points(points)
            out = np.einsum("ni,ni->n", beta(p), grad(p))
            if beta0 is not None:
                out = out + beta0(p) * exact(p)
            return out

        return g

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "params": self.params,
            "omega_data": self.omega_data.to_dict(),
        }


def _nondivergence_rhs(
    coeffs: CoefficientField, hessian: Callable[[np.ndarray], np.ndarray]
) -> PointFunction:
    def f(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        return np.einsum("nij,nij->n", coeffs.matrix(p), hessian(p))

    return f


@family("data")
def paraboloid(coeffs: CoefficientField) -> DataSet:
    """u = 1 − |x|²: zero on the unit circle, D₂u = 0 on the flat line."""

    def exact(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        return 1.0 - np.sum(p**2, axis=1)

    def gradient(points: np.ndarray) -> np.ndarray:
        return -2.0 * as_points(points)

    def hessian(points: np.ndarray) -> np.ndarray:
        n = as_points(points).shape[0]
        return np.broadcast_to(-2.0 * np.eye(2), (n, 2, 2)).copy()

    omega_A = coefficient_modulus(coeffs)
    return DataSet(
        name="paraboloid",
        kind="mixed",
        f=_nondivergence_rhs(coeffs, hessian),
        dirichlet=exact,
        exact=exact,
        gradient=gradient,
        hessian=hessian,
        omega_data=ZeroModulus() if omega_A.is_zero() else 2.0 * omega_A,
    )


@family("data")
def cosine(coeffs: CoefficientField, k: float = 1.5707963267948966) -> DataSet:
    """u = cos(kx¹)·cos(kx²), even in x²."""

    def exact(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        return np.cos(k * p[:, 0]) * np.cos(k * p[:, 1])

    def gradient(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        cx, cy = np.cos(k * p[:, 0]), np.cos(k * p[:, 1])
        sx, sy = np.sin(k * p[:, 0]), np.sin(k * p[:, 1])
        return np.column_stack([-k * sx * cy, -k * cx * sy])

    def hessian(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        cx, cy = np.cos(k * p[:, 0]), np.cos(k * p[:, 1])
        sx, sy = np.sin(k * p[:, 0]), np.sin(k * p[:, 1])
        out = np.empty((p.shape[0], 2, 2))
        out[:, 0, 0] = -(k**2) * cx * cy
        out[:, 1, 1] = -(k**2) * cx * cy
        out[:, 0, 1] = out[:, 1, 0] = k**2 * sx * sy
        return out

    omega_A = coefficient_modulus(coeffs)
    _, Lam = coeffs.ellipticity(np.array([[0.0, 0.5], [0.5, 0.5], [-0.5, 0.5]]))
    terms: List[Modulus] = [PowerModulus(1.0, 2.0 * Lam * k**3)]
    if not omega_A.is_zero():
        terms.append(k**2 * omega_A)
    return DataSet(
        name="cosine",
        kind="mixed",
        f=_nondivergence_rhs(coeffs, hessian),
        dirichlet=exact,
        exact=exact,
        gradient=gradient,
        hessian=hessian,
        omega_data=SumModulus(terms),
        params={"k": k},
    )


@family("data", name="unit-flux")
def unit_flux(coeffs: CoefficientField) -> DataSet:
    """Conormal data g⃗ = e₁, so A∇u = e₁ and ∇u = (1/a¹¹, 0).

    Exact when a¹¹ depends on x¹ only and a¹² = 0, as in the rough
    coefficient families; u itself is known up to a constant.
    """

    def gradient(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        a11 = coeffs.matrix(p)[:, 0, 0]
        return np.column_stack([1.0 / a11, np.zeros(p.shape[0])])

    def g(points: np.ndarray) -> np.ndarray:
        n = as_points(points).shape[0]
        return np.column_stack([np.ones(n), np.zeros(n)])

    return DataSet(name="unit-flux", kind="conormal", g=g, gradient=gradient)


@family("data")
def bump(
    coeffs: CoefficientField, x: float = 0.0, y: float = 0.3, width: float = 0.25
) -> DataSet:
    """Smooth compactly supported f with zero Dirichlet data; no exact solution."""

    def f(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        r2 = ((p[:, 0] - x) ** 2 + (p[:, 1] - y) ** 2) / width**2
        out = np.zeros(p.shape[0])
        inside = r2 < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        return out

    # Lipschitz bound of the bump profile
    return DataSet(
        name="bump",
        kind="mixed",
        f=f,
        omega_data=PowerModulus(1.0, 4.0 / width),
        params={"x": x, "y": y, "width": width},
    )
