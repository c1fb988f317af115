"""Graph domains, the regularized distance and distance-based flattening.

Domains are single patches {x² > γ(x¹)} around the distinguished boundary
point 0 with defining function ψ₀(x) = x² − γ(x¹).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline, NearestNDInterpolator
from typing_extensions import Literal

from .exceptions import NumericError, ParameterError, PatchTooLargeError
from .fields import (
    Grid2D,
    PointFunction,
    ScalarField,
    as_points,
    fd_gradient,
    fd_hessian,
    fd_third,
    richardson,
)
from .modulus import Modulus, PowerModulus, TableModulus, ZeroModulus
from .store import CSV_FORMAT, csv_table

logger = logging.getLogger(__name__)

FIXED_POINT_TOLERANCE = 1e-12
FIXED_POINT_MAX_ITER = 60
FD_ZERO_TOLERANCE = 1e-6
JACOBIAN_FLOOR = 1e-3
ROUND_TRIP_TOLERANCE = 1e-8


# Mollifier -----------------------------------------------------------------


@dataclass(frozen=True)
class MollifierSpec:
    """Radial mollifier ζ on the unit disk with a polar product quadrature.

    ``profile="polynomial"`` is c(1 − |y|²)^k; ``profile="bump"`` is
    c·exp(−1/(1 − |y|²)).
    """

    profile: Literal["polynomial", "bump"] = "polynomial"
    exponent: int = 4
    radial_nodes: int = 24
    angular_nodes: int = 32

    def __post_init__(self) -> None:
        if self.radial_nodes < 16 or self.angular_nodes < 16:
            raise ParameterError(
                "Mollifier quadrature needs at least 16 points per axis"
            )
        if self.angular_nodes % 2:
            raise ParameterError(
                "Angular node count must be even so odd moments cancel"
            )
        if self.profile not in ("polynomial", "bump"):
            raise ParameterError(f"Unknown mollifier profile {self.profile!r}")

    def _shape(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = r < 1.0
        out = np.zeros_like(r)
        if self.profile == "polynomial":
            out[inside] = (1.0 - r[inside] ** 2) ** self.exponent
        else:
            out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return out

    @cached_property
    def normalization(self) -> float:
        def radial(r: float) -> float:
            return 2.0 * np.pi * r * float(self._shape(np.array([r]))[0])

        mass, _ = integrate.quad(radial, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        return 1.0 / mass

    def density(self, y: np.ndarray) -> np.ndarray:
        y = as_points(y)
        return self.normalization * self._shape(np.hypot(y[:, 0], y[:, 1]))

    @property
    def max_value(self) -> float:
        return float(self.normalization * self._shape(np.array([0.0]))[0])

    @cached_property
    def rule(self) -> Tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes ``(Q, 2)`` and weights ``(Q,)`` with Σw = 1."""
        xr, wr = np.polynomial.legendre.leggauss(self.radial_nodes)
        r = 0.5 * (xr + 1.0)
        wr = 0.5 * wr
        theta = 2.0 * np.pi * (np.arange(self.angular_nodes) + 0.5) / self.angular_nodes
        R, T = np.meshgrid(r, theta, indexing="ij")
        ring = wr * r * self.normalization * self._shape(r)
        W = ring[:, None] * (2.0 * np.pi / self.angular_nodes)
        W = np.broadcast_to(W, R.shape)
        nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        weights = W.ravel().copy()
        return nodes, weights

    @property
    def normalization_error(self) -> float:
        return abs(float(self.rule[1].sum()) - 1.0)


# Graph domains -------------------------------------------------------------


class GraphDomain:
    """The patch {x² > γ(x¹), |x¹| < b} with its Dini characteristics."""

    def __init__(
        self,
        gamma: Callable[[np.ndarray], np.ndarray],
        dgamma: Callable[[np.ndarray], np.ndarray],
        rho_dgamma: Modulus,
        b: float,
        name: str = "graph",
        params: Optional[Dict[str, Any]] = None,
    ) -> None:
        if not b > 0:
            raise ParameterError(f"Patch half-width must be positive, got {b}")
        self.gamma = gamma
        self.dgamma = dgamma
        self.rho_dgamma = rho_dgamma
        self.b = float(b)
        self.name = name
        self.params = dict(params or {})

        g0 = float(np.asarray(gamma(np.array([0.0])))[0])
        dg0 = float(np.asarray(dgamma(np.array([0.0])))[0])
        if abs(g0) > 1e-12 or abs(dg0) > 1e-12:
            raise ParameterError("Boundary graph must satisfy γ(0) = 0 and γ'(0) = 0")
        s = np.linspace(-self.b, self.b, 2001)
        if np.max(np.abs(dgamma(s))) >= 0.5:
            raise ParameterError(f"|γ'| must stay below 1/2 on |x¹| < b = {self.b}")

        wide = np.linspace(-2 * self.b, 2 * self.b, 4001)
        lip = float(np.max(np.abs(dgamma(wide))))
        self.K = float(np.sqrt(1.0 + lip**2))
        self.delta = 1.0 / self.K

    # Closed-form families -------------------------------------------------

    @classmethod
    def flat(cls, b: float = 1.0) -> "GraphDomain":
        return cls(
            gamma=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
            dgamma=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
            rho_dgamma=ZeroModulus(),
            b=b,
            name="flat",
            params={"b": b},
        )

    @classmethod
    def parabolic(cls, c: float = 0.25, b: float = 0.5) -> "GraphDomain":
        return cls(
            gamma=lambda s: c * np.asarray(s, dtype=float) ** 2,
            dgamma=lambda s: 2.0 * c * np.asarray(s, dtype=float),
            rho_dgamma=PowerModulus(1.0, 2.0 * c),
            b=b,
            name="parabolic",
            params={"c": c, "b": b},
        )

    @classmethod
    def power(cls, alpha: float = 0.5, c: float = 1.0, b: float = 0.1) -> "GraphDomain":
        if not 0.0 < alpha <= 1.0:
            raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")

        def gamma(s: np.ndarray) -> np.ndarray:
            return c * np.abs(np.asarray(s, dtype=float)) ** (1.0 + alpha)

        def dgamma(s: np.ndarray) -> np.ndarray:
            s = np.asarray(s, dtype=float)
            return c * (1.0 + alpha) * np.sign(s) * np.abs(s) ** alpha

        return cls(
            gamma=gamma,
            dgamma=dgamma,
            rho_dgamma=PowerModulus(alpha, c * (1.0 + alpha) * 2.0 ** (1.0 - alpha)),
            b=b,
            name="power",
            params={"alpha": alpha, "c": c, "b": b},
        )

    @classmethod
    def from_table(
        cls, x: Sequence[float], values: Sequence[float], b: float
    ) -> "GraphDomain":
        """Sampled γ interpolated by a cubic spline."""
        x_arr = np.asarray(x, dtype=float)
        spline = CubicSpline(x_arr, np.asarray(values, dtype=float))
        deriv = spline.derivative()
        s = np.linspace(float(np.min(x)), float(np.max(x)), 2001)
        ds = np.abs(deriv(s)[:, None] - deriv(s)[None, :])
        gap = np.abs(s[:, None] - s[None, :])
        radii = np.geomspace(4 * (s[1] - s[0]), s[-1] - s[0], 24)
        rho = [float(ds[gap <= r].max()) for r in radii]
        return cls(
            gamma=lambda t: spline(np.asarray(t, dtype=float)),
            dgamma=lambda t: deriv(np.asarray(t, dtype=float)),
            rho_dgamma=TableModulus.from_running_max(radii, rho),
            b=b,
            name="table",
            params={
                "x": list(map(float, x)),
                "gamma": list(map(float, values)),
                "b": b,
            },
        )

    # Defining function ----------------------------------------------------

    @property
    def rho_dpsi0(self) -> Modulus:
        return self.rho_dgamma

    def psi0(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        return pts[:, 1] - self.gamma(pts[:, 0])

    def grad_psi0(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        return np.column_stack([-self.dgamma(pts[:, 0]), np.ones(pts.shape[0])])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        return (self.psi0(pts) > 0) & (np.abs(pts[:, 0]) < self.b)

    def boundary_points(
        self, n: int = 101, width: Optional[float] = None
    ) -> np.ndarray:
        w = self.b if width is None else width
        s = np.linspace(-w, w, n)
        return np.column_stack([s, self.gamma(s)])

    def outward_normal(self, x1: np.ndarray) -> np.ndarray:
        d = np.asarray(self.dgamma(np.asarray(x1, dtype=float)))
        nrm = np.sqrt(1.0 + d**2)
        return np.column_stack([d / nrm, -1.0 / nrm])

    def sample_interior(
        self, n: int, depth: float, seed: int = 0, width: Optional[float] = None
    ) -> np.ndarray:
        """``n`` seeded points with |x¹| ≤ width and 0 < ψ₀ ≤ depth."""
        rng = np.random.default_rng(seed)
        w = self.b / 2 if width is None else width
        x1 = rng.uniform(-w, w, n)
        lift = depth * rng.uniform(0.0, 1.0, n) ** 2 + 1e-4 * depth
        return np.column_stack([x1, self.gamma(x1) + lift])

    def distance_to_boundary(self, points: np.ndarray) -> np.ndarray:
        """dist(x, ∂Ω) by projection search along the graph; positive inside."""
        pts = as_points(points)
        out = np.empty(pts.shape[0])
        for k, (x1, x2) in enumerate(pts):
            vertical = abs(x2 - float(self.gamma(np.array([x1]))[0]))
            reach = vertical + 1e-12
            s = np.linspace(x1 - reach, x1 + reach, 401)
            d2 = (s - x1) ** 2 + (x2 - self.gamma(s)) ** 2
            j = int(np.argmin(d2))
            lo, hi = s[max(j - 1, 0)], s[min(j + 1, s.size - 1)]
            best = float(d2[j])
            if hi > lo:

                def sq_dist(v: float, x1: float = x1, x2: float = x2) -> float:
                    on_graph = float(self.gamma(np.array([v]))[0])
                    return (v - x1) ** 2 + (x2 - on_graph) ** 2

                res = optimize.minimize_scalar(
                    sq_dist,
                    bounds=(lo, hi),
                    method="bounded",
                    options={"xatol": 1e-14},
                )
                best = min(best, float(res.fun))
            sign = 1.0 if x2 >= float(self.gamma(np.array([x1]))[0]) else -1.0
            out[k] = sign * np.sqrt(best)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": self.params,
            "K": self.K,
            "delta": self.delta,
        }


# Coordinate maps -----------------------------------------------------------


@dataclass
class DiffeoMap:
    """Mutually inverse maps with Jacobians and FD second derivatives.

    ``forward`` sends source coordinates to target coordinates; ``validity``
    marks source points where the pair is trusted.
    """

    forward: PointFunction
    inverse: PointFunction
    validity: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse_jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5
    name: str = "map"
    metadata: Dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def _fd_jacobian(func: PointFunction, points: np.ndarray, h: float) -> np.ndarray:
        pts = as_points(points)
        out = np.empty((pts.shape[0], 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, :, k] = (func(pts + e) - func(pts - e)) / (2.0 * h)
        return out

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """``J[:, i, k] = ∂forward^i/∂x_k``."""
        if self.jacobian_fn is not None:
            return self.jacobian_fn(as_points(points))
        return self._fd_jacobian(self.forward, points, self.fd_step)

    def inverse_jacobian(self, points: np.ndarray) -> np.ndarray:
        if self.inverse_jacobian_fn is not None:
            return self.inverse_jacobian_fn(as_points(points))
        return self._fd_jacobian(self.inverse, points, self.fd_step)

    def second_derivative(
        self, points: np.ndarray, inverse: bool = False
    ) -> np.ndarray:
        """``H[:, i, k, l] = ∂²map^i/∂x_k∂x_l`` by central differences of J."""
        jac = self.inverse_jacobian if inverse else self.jacobian
        pts = as_points(points)
        h = self.fd_step * 10.0
        out = np.empty((pts.shape[0], 2, 2, 2))
        for l in range(2):
            e = np.zeros(2)
            e[l] = h
            out[:, :, :, l] = (jac(pts + e) - jac(pts - e)) / (2.0 * h)
        return out

    def round_trip_error(self, points: np.ndarray) -> float:
        pts = as_points(points)
        pts = pts[np.asarray(self.validity(pts), dtype=bool)]
        if pts.size == 0:
            return 0.0
        back = self.inverse(self.forward(pts))
        return float(np.max(np.linalg.norm(back - pts, axis=1)))

    def to_csv(self, points: np.ndarray) -> str:
        pts = as_points(points)
        img = self.forward(pts)
        return csv_table(
            ["x", "y", "fx", "fy"], [pts[:, 0], pts[:, 1], img[:, 0], img[:, 1]]
        )


# Mollified lift and regularized distance ----------------------------------


def mollified_lift(
    psi0: PointFunction,
    zeta: MollifierSpec,
    t: Union[float, np.ndarray],
    x: np.ndarray,
) -> np.ndarray:
    """Ψ(t, x) = ∫ ψ₀(x − t y) ζ(y) dy, vectorized over points (and per-point t)."""
    pts = as_points(x)
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), (pts.shape[0],))
    nodes, weights = zeta.rule
    shifted = pts[:, None, :] - t_arr[:, None, None] * nodes[None, :, :]
    vals = psi0(shifted.reshape(-1, 2)).reshape(pts.shape[0], -1)
    return vals @ weights


@dataclass
class FixedPointHistory:
    """Per-iteration max gaps of the regularized-distance iteration."""

    gaps: List[float]
    iterations: int


def regularized_distance(
    domain: GraphDomain,
    zeta: MollifierSpec,
    x: np.ndarray,
    tol: float = FIXED_POINT_TOLERANCE,
    max_iter: int = FIXED_POINT_MAX_ITER,
    return_history: bool = False,
) -> Any:
    """Solve t = (2K)^{-1} Ψ(t, x) by fixed-point iteration.

    The map is a contraction with factor ≤ 1/2, starting from ψ₀(x)/(2K).
    """
    pts = as_points(x)
    if np.any(np.abs(pts[:, 0]) > 2.0 * domain.b):
        raise ParameterError("Points must lie within the patch |x¹| ≤ 2b")
    two_k = 2.0 * domain.K
    psi0 = domain.psi0(pts)
    t = psi0 / two_k
    thresh = tol * (1.0 + np.abs(psi0))
    gaps: List[float] = []
    active = np.ones(pts.shape[0], dtype=bool)

    for it in range(1, max_iter + 1):
        new = t.copy()
        new[active] = mollified_lift(domain.psi0, zeta, t[active], pts[active]) / two_k
        gap = np.abs(new - t)
        gaps.append(float(gap.max()) if gap.size else 0.0)
        t = new
        active = gap > thresh
        if not active.any():
            break
    else:
        raise NumericError(
            f"Regularized distance did not converge in {max_iter} iterations "
            f"(max gap {gaps[-1]:.3e}); check K={domain.K}"
        )

    out: Any = t
    if return_history:
        return out, FixedPointHistory(gaps=gaps, iterations=len(gaps))
    return out


@dataclass
class DerivativeReport:
    """Per-point derivative ratios of the regularized distance."""

    points: np.ndarray
    psi: np.ndarray
    grad_norm: np.ndarray
    ratio2: np.ndarray
    ratio3: np.ndarray
    skipped: np.ndarray

    @property
    def sup(self) -> Dict[str, float]:
        keep = ~self.skipped

        def top(v: np.ndarray) -> float:
            vals = v[keep]
            return float(np.max(vals)) if vals.size else 0.0

        return {
            "grad_norm": top(self.grad_norm),
            "ratio2": top(self.ratio2),
            "ratio3": top(self.ratio3),
        }

    def to_csv(self) -> str:
        pts = self.points
        return csv_table(
            ["x", "y", "psi", "grad_norm", "ratio2", "ratio3", "skipped"],
            [
                pts[:, 0],
                pts[:, 1],
                self.psi,
                self.grad_norm,
                self.ratio2,
                self.ratio3,
                self.skipped,
            ],
            fmt=[CSV_FORMAT] * 6 + ["%d"],
        )


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > FD_ZERO_TOLERANCE)] = np.inf
    return out


def regularized_distance_derivative_report(
    domain: GraphDomain,
    zeta: MollifierSpec,
    points: np.ndarray,
    orders: int = 3,
    step_fraction: float = 0.1,
    min_psi: float = 1e-4,
) -> DerivativeReport:
    """FD derivatives of ψ up to ``orders`` with steps ψ(x)·step_fraction.

    Ratios are |D²ψ|·ψ/ϱ(ψ) and |D³ψ|·ψ²/ϱ(ψ) with ϱ = ϱ_{Dψ₀}; points with
    ψ below ``min_psi`` are skipped and flagged.
    """
    if step_fraction > 0.1:
        raise ParameterError("FD step must not exceed ψ/10")
    pts = as_points(points)

    def psi_fn(p: np.ndarray) -> np.ndarray:
        return regularized_distance(domain, zeta, p, tol=1e-14)

    psi = psi_fn(pts)
    skipped = psi < min_psi
    n = pts.shape[0]
    grad_norm = np.zeros(n)
    ratio2 = np.zeros(n)
    ratio3 = np.zeros(n)

    keep = ~skipped
    if keep.any():
        kp = pts[keep]
        h = psi[keep] * step_fraction
        grad = richardson(lambda hh: fd_gradient(psi_fn, kp, hh), h)
        grad_norm[keep] = np.linalg.norm(grad, axis=1)
        rho = domain.rho_dpsi0(psi[keep])
        if orders >= 2:
            hess = richardson(lambda hh: fd_hessian(psi_fn, kp, hh), h)
            hess_norm = np.linalg.norm(hess, axis=(1, 2))
            ratio2[keep] = _safe_ratio(hess_norm * psi[keep], rho)
        if orders >= 3:
            third = fd_third(psi_fn, kp, h)
            mag = np.sqrt(np.sum(third**2, axis=(1, 2, 3)))
            ratio3[keep] = _safe_ratio(mag * psi[keep] ** 2, rho)
    if skipped.any():
        logger.warning(
            f"Skipped {int(skipped.sum())} samples too close to the boundary for FD"
        )
    return DerivativeReport(pts, psi, grad_norm, ratio2, ratio3, skipped)


# Dini extension ------------------------------------------------------------


def point_evaluator(u: Union[PointFunction, ScalarField]) -> PointFunction:
    """Turn a field into a point function; grid samples fall back to nearest values."""
    if not isinstance(u, ScalarField):
        return u
    if u.func is not None:
        return u.func
    finite = np.isfinite(u.values) & u.grid.mask
    nearest = NearestNDInterpolator(u.grid.points()[finite.ravel()], u.values[finite])

    def evaluate(points: np.ndarray) -> np.ndarray:
        vals = u(points)
        bad = ~np.isfinite(vals)
        if bad.any():
            vals = vals.copy()
            vals[bad] = nearest(as_points(points)[bad])
        return vals

    return evaluate


@dataclass
class ExtensionReport:
    """Quality measures of a Dini extension on sample points."""

    boundary_error: float
    norm_ratio: float
    growth_ratio: float
    growth_table: List[Tuple[float, float]]
    rho_du: Modulus

    def to_dict(self) -> Dict[str, Any]:
        return {
            "boundary_error": self.boundary_error,
            "norm_ratio": self.norm_ratio,
            "growth_ratio": self.growth_ratio,
            "growth_table": self.growth_table,
        }


class DiniExtension:
    """ũ(x) = U(δψ(x), x) with U(t, x) = ∫ u(x − t y) ζ(y) dy."""

    def __init__(
        self,
        u: Union[PointFunction, ScalarField],
        domain: GraphDomain,
        zeta: MollifierSpec,
        delta: Optional[float] = None,
    ) -> None:
        self.u = point_evaluator(u)
        self.domain = domain
        self.zeta = zeta
        self.delta = domain.delta if delta is None else float(delta)

    def psi(self, points: np.ndarray) -> np.ndarray:
        return regularized_distance(self.domain, self.zeta, points)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        t = self.delta * self.psi(pts)
        return mollified_lift(self.u, self.zeta, t, pts)

    def sample(self, grid: Grid2D) -> ScalarField:
        return ScalarField.from_function(grid, self)

    def report(
        self,
        points: np.ndarray,
        rho_du: Optional[Modulus] = None,
        fd_step: float = 1e-4,
        boundary_samples: int = 41,
    ) -> ExtensionReport:
        """Boundary agreement, |ũ|₁/|u|₁ and the D²ũ growth ratio at ``points``."""
        pts = as_points(points)
        bpts = self.domain.boundary_points(boundary_samples, width=self.domain.b / 2)
        boundary_error = float(np.max(np.abs(self(bpts) - self.u(bpts))))

        grad_u = fd_gradient(self.u, pts, fd_step)
        grad_ext = fd_gradient(self, pts, fd_step)
        norm_u = float(
            np.max(np.abs(self.u(pts))) + np.max(np.linalg.norm(grad_u, axis=1))
        )
        norm_ext = float(
            np.max(np.abs(self(pts))) + np.max(np.linalg.norm(grad_ext, axis=1))
        )
        norm_ratio = norm_ext / norm_u if norm_u > 0 else 0.0

        if rho_du is None:
            rho_du = _pairwise_modulus(pts, grad_u)
            sup_du = float(np.max(np.linalg.norm(grad_u, axis=1)))
            first = float(rho_du(rho_du.t[1])) if rho_du.t.size > 1 else 0.0
            if sup_du > 0 and first > 0.1 * sup_du:
                logger.warning(
                    "Du is not resolved by the sample points; ϱ_Du estimate is coarse"
                )

        d = self.domain.distance_to_boundary(pts)
        h = np.minimum(fd_step, 0.1 * np.abs(d))
        hess = fd_hessian(self, pts, np.maximum(h, 1e-7))
        growth = np.linalg.norm(hess, axis=(1, 2)) * d
        den = rho_du(np.abs(d)) + self.domain.rho_dpsi0(np.abs(d))
        ratio = _safe_ratio(growth, den)
        table = sorted(zip(d.tolist(), ratio.tolist()))
        return ExtensionReport(
            boundary_error=boundary_error,
            norm_ratio=norm_ratio,
            growth_ratio=float(np.max(ratio)) if ratio.size else 0.0,
            growth_table=table,
            rho_du=rho_du,
        )


def _pairwise_modulus(
    points: np.ndarray, values: np.ndarray, bins: int = 16
) -> TableModulus:
    gap = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    diff = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=-1)
    pos = gap[gap > 0]
    if pos.size == 0:
        return TableModulus([1.0], [0.0])
    radii = np.geomspace(pos.min(), pos.max(), bins)
    raw = [float(diff[(gap <= r) & (gap > 0)].max(initial=0.0)) for r in radii]
    return TableModulus.from_running_max(radii, raw)


def dini_extension(
    u: Union[PointFunction, ScalarField],
    domain: GraphDomain,
    zeta: MollifierSpec,
    delta: Optional[float] = None,
) -> DiniExtension:
    """C^{1,Dini} extension of u into the domain, smooth in the interior."""
    return DiniExtension(u, domain, zeta, delta)


# Flattening ----------------------------------------------------------------


class DistanceFlattening:
    """z = (x¹ − x₀¹, ψ(x)) with its inverse by Newton iteration in x²."""

    def __init__(
        self,
        domain: GraphDomain,
        zeta: MollifierSpec,
        x0: float,
        fd_step: float = 1e-5,
    ) -> None:
        self.domain = domain
        self.zeta = zeta
        self.x0 = float(x0)
        self.fd_step = fd_step

    def psi(self, points: np.ndarray) -> np.ndarray:
        return regularized_distance(self.domain, self.zeta, points)

    def forward(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        return np.column_stack([pts[:, 0] - self.x0, self.psi(pts)])

    def inverse(self, z: np.ndarray) -> np.ndarray:
        zz = as_points(z)
        x1 = zz[:, 0] + self.x0
        x2 = self.domain.gamma(x1) + 2.0 * self.domain.K * zz[:, 1]
        h = self.fd_step
        for _ in range(50):
            pts = np.column_stack([x1, x2])
            res = self.psi(pts) - zz[:, 1]
            up = self.psi(np.column_stack([x1, x2 + h]))
            dn = self.psi(np.column_stack([x1, x2 - h]))
            slope = (up - dn) / (2.0 * h)
            if np.any(slope <= JACOBIAN_FLOOR):
                raise PatchTooLargeError("∂ψ/∂x² degenerates; shrink the patch")
            step = res / slope
            x2 = x2 - step
            if np.max(np.abs(step)) < 1e-13:
                break
        else:
            raise NumericError("Inverse flattening map did not converge")
        return np.column_stack([x1, x2])

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        grad = fd_gradient(self.psi, pts, self.fd_step)
        J = np.zeros((pts.shape[0], 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, :] = grad
        return J

    def as_map(self, validity: Callable[[np.ndarray], np.ndarray]) -> DiffeoMap:
        return DiffeoMap(
            forward=self.forward,
            inverse=self.inverse,
            validity=validity,
            jacobian_fn=self.jacobian,
            fd_step=self.fd_step,
            name="distance_flattening",
            metadata={"x0": self.x0, "K": self.domain.K},
        )


@dataclass
class FlatteningResult:
    """Transformed equation data on B⁺(0, 4s₀) in flattened coordinates."""

    map: DiffeoMap
    s0: float
    grid: Grid2D
    x_points: np.ndarray
    a_tilde: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray
    f_tilde: np.ndarray
    h: np.ndarray
    u_tilde: ScalarField
    ellipticity_bounds: Tuple[float, float]
    boundary_image_error: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s0": self.s0,
            "ellipticity_bounds": list(self.ellipticity_bounds),
            "boundary_image_error": self.boundary_image_error,
            "nodes": int(self.grid.mask.sum()),
        }


def _half_disk_outline(radius: float, n: int = 64) -> np.ndarray:
    theta = np.linspace(0.0, np.pi, n)
    arc = radius * np.column_stack([np.cos(theta), np.sin(theta)])
    flat = np.column_stack([np.linspace(-radius, radius, n), np.zeros(n)])
    return np.vstack([arc, flat])


def _find_s0(flat: DistanceFlattening, x0: np.ndarray, s: float) -> float:
    s0 = s / 2.0
    for _ in range(30):
        try:
            outline = flat.inverse(_half_disk_outline(4.0 * s0))
            near = np.linalg.norm(outline - x0, axis=1) < 2.0 * s
            inside = flat.domain.psi0(outline) >= -1e-10
            if near.all() and inside.all():
                return s0
        except (PatchTooLargeError, NumericError):
            pass
        s0 *= 0.8
    raise PatchTooLargeError(f"No s₀ with B⁺(0, 4s₀) ⊂ z(Ω(x₀, 2s)) for s = {s}")


def flatten_by_distance(
    domain: GraphDomain,
    x0: float,
    s: float,
    A: Callable[[np.ndarray], np.ndarray],
    f: PointFunction,
    u: PointFunction,
    b: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    c: Optional[PointFunction] = None,
    zeta: Optional[MollifierSpec] = None,
    resolution: int = 33,
) -> FlatteningResult:
    """Flatten Ω near (x₀, γ(x₀)) with z = (x¹ − x₀, ψ(x)).

    Returns ã = Dz A Dzᵀ, b̃ = Dz b, c̃ = c, the h-field
    h^{ij} = D_nũ(z) D_{ij}ψ(x) and f̃ = f − a^{kl}h^{kl}, all sampled on the
    half-ball B⁺(0, 4s₀).
    """
    zeta = zeta or MollifierSpec()
    flat = DistanceFlattening(domain, zeta, x0)
    base = np.array([x0, float(domain.gamma(np.array([x0]))[0])])
    s0 = _find_s0(flat, base, s)

    R = 4.0 * s0
    grid = Grid2D.uniform(
        (-R, R, 0.0, R),
        (2 * resolution - 1, resolution),
        region=lambda p: p[:, 0] ** 2 + p[:, 1] ** 2 <= R**2 * (1 + 1e-12),
    )
    z_nodes = grid.active_points()
    x_nodes = flat.inverse(z_nodes)

    Dz = flat.jacobian(x_nodes)
    det = Dz[:, 1, 1]
    if np.min(det) < JACOBIAN_FLOOR:
        raise PatchTooLargeError(
            f"Flattening Jacobian near-singular (min det {np.min(det):.2e})"
        )

    h_fd = max(flat.fd_step * 10.0, 1e-4 * s)
    hess_psi = fd_hessian(flat.psi, x_nodes, h_fd)
    grad_u = fd_gradient(u, x_nodes, h_fd)
    dn_u = grad_u[:, 1] / det
    h_field = dn_u[:, None, None] * hess_psi

    A_x = A(x_nodes)
    a_tilde = np.einsum("nik,nkl,njl->nij", Dz, A_x, Dz)
    b_x = b(x_nodes) if b is not None else np.zeros((x_nodes.shape[0], 2))
    b_tilde = np.einsum("nik,nk->ni", Dz, b_x)
    c_tilde = c(x_nodes) if c is not None else np.zeros(x_nodes.shape[0])
    f_tilde = f(x_nodes) - np.einsum("nkl,nkl->n", A_x, h_field)

    eig_a = np.linalg.eigvalsh(0.5 * (A_x + np.transpose(A_x, (0, 2, 1))))
    eig_t = np.linalg.eigvalsh(0.5 * (a_tilde + np.transpose(a_tilde, (0, 2, 1))))
    sv = np.linalg.svd(Dz, compute_uv=False)
    N = float(max(np.max(sv[:, 0]) ** 2, np.max(1.0 / sv[:, 1]) ** 2))
    lam, Lam = float(eig_a.min()), float(eig_a.max())
    if eig_t.min() < lam / N * (1 - 1e-8) or eig_t.max() > N * Lam * (1 + 1e-8):
        logger.warning("Transformed coefficients left the expected ellipticity window")

    bpts = domain.boundary_points(41, width=min(domain.b, 2 * s) / 2)
    boundary_image_error = float(np.max(np.abs(flat.forward(bpts)[:, 1])))

    u_vals = np.full(grid.shape, np.nan)
    u_vals[grid.mask] = u(x_nodes)

    def validity(p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(as_points(p) - base, axis=1) < 2.0 * s

    return FlatteningResult(
        map=flat.as_map(validity),
        s0=s0,
        grid=grid,
        x_points=x_nodes,
        a_tilde=a_tilde,
        b_tilde=b_tilde,
        c_tilde=c_tilde,
        f_tilde=f_tilde,
        h=h_field,
        u_tilde=ScalarField(grid, u_vals, func=None),
        ellipticity_bounds=(lam / N, N * Lam),
        boundary_image_error=boundary_image_error,
    )


@dataclass
class HFieldCheck:
    """Empirical constants of the h-field bounds at two resolutions."""

    value_ratio: Tuple[float, float]
    pair_ratio: Tuple[float, float]
    mean_value_ratio: Tuple[float, float]
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value_ratio": list(self.value_ratio),
            "pair_ratio": list(self.pair_ratio),
            "mean_value_ratio": list(self.mean_value_ratio),
            "passed": self.passed,
        }


def _h_ratios(
    result: FlatteningResult, theta: Modulus, seed: int, pairs: int
) -> Tuple[float, float, float]:
    z = result.grid.active_points()
    h = result.h
    d2u = result.u_tilde.hessian()
    d2u_sup = d2u.sup_norm()
    if d2u_sup == 0.0 or not np.isfinite(d2u_sup):
        zero = float(np.max(np.abs(h))) <= FD_ZERO_TOLERANCE
        return (0.0, 0.0, 0.0) if zero else (np.inf, np.inf, np.inf)

    hmag = np.linalg.norm(h, axis=(1, 2))
    value = float(np.max(_safe_ratio(hmag, d2u_sup * theta(z[:, 1]))))

    rng = np.random.default_rng(seed)
    i = rng.integers(0, z.shape[0], pairs)
    j = rng.integers(0, z.shape[0], pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(z[i] - z[j], axis=1)
    diff = np.linalg.norm(h[i] - h[j], axis=(1, 2))
    pair = _safe_ratio(diff, d2u_sup * theta(dist))

    mv = dist <= 0.5 * np.maximum(z[i, 1], z[j, 1])
    pair_sup = float(np.max(pair)) if pair.size else 0.0
    mv_sup = float(np.max(pair[mv])) if mv.any() else 0.0
    return value, pair_sup, mv_sup


def h_field_modulus_check(
    coarse: FlatteningResult,
    fine: FlatteningResult,
    theta: Modulus,
    seed: int = 0,
    pairs: int = 4000,
    stability: float = 0.2,
) -> HFieldCheck:
    """Check |h̃| ≲ ‖D²ũ‖ϑ(zⁿ) and |h̃(z₁) − h̃(z₂)| ≲ ‖D²ũ‖ϑ(|z₁ − z₂|).

    Passes when every ratio is finite at both resolutions and changes by
    less than ``stability`` (relative) between them.
    """
    rc = _h_ratios(coarse, theta, seed, pairs)
    rf = _h_ratios(fine, theta, seed, pairs)

    def stable(a: float, b: float) -> bool:
        if not (np.isfinite(a) and np.isfinite(b)):
            return False
        if max(abs(a), abs(b)) <= FD_ZERO_TOLERANCE:
            return True
        return abs(a - b) <= stability * max(abs(a), abs(b)) + 1e-8

    ok = all(stable(a, b) for a, b in zip(rc, rf))
    return HFieldCheck(
        value_ratio=(rc[0], rf[0]),
        pair_ratio=(rc[1], rf[1]),
        mean_value_ratio=(rc[2], rf[2]),
        passed=ok,
    )


# Operator transport --------------------------------------------------------


def transform_operator(
    diffeo: DiffeoMap,
    A: Callable[[np.ndarray], np.ndarray],
    x_points: np.ndarray,
    b: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Carry a^{ij}D_{ij} + b^iD_i through y = forward(x).

    Returns (â, b̂) at ``x_points`` with â^{kl} = a^{ij}∂_iy^k∂_jy^l and
    b̂^k = b^i∂_iy^k + a^{ij}∂_{ij}y^k.
    """
    pts = as_points(x_points)
    J = diffeo.jacobian(pts)
    H = diffeo.second_derivative(pts)
    A_x = A(pts)
    b_x = b(pts) if b is not None else np.zeros((pts.shape[0], 2))
    a_hat = np.einsum("nki,nij,nlj->nkl", J, A_x, J)
    b_hat = np.einsum("nki,ni->nk", J, b_x) + np.einsum("nij,nkij->nk", A_x, H)
    return a_hat, b_hat
