"""Oblique boundary geometry: flow straightening, the ODE envelope check,
boundary-data lifts and the reduction to homogeneous Neumann data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .exceptions import (
    NumericError,
    ObliquenessError,
    ParameterError,
    RejectedInputError,
)
from .fields import PointFunction, as_points, fd_gradient, fd_hessian, fd_third
from .geometry import (
    DiffeoMap,
    DiniExtension,
    FlatteningResult,
    GraphDomain,
    MollifierSpec,
    _pairwise_modulus,
    _safe_ratio,
    flatten_by_distance,
    transform_operator,
)
from .modulus import (
    IntegralModulus,
    Modulus,
    PowerModulus,
    SumModulus,
    ZeroModulus,
    dini_integral,
)
from .solvers import CoefficientField
from .tracing import StageKind, Tracer

logger = logging.getLogger(__name__)

FLOW_TOLERANCE = 1e-8
FLOW_MIN_STEPS = 16
FLOW_MAX_STEPS = 2**14
RADIUS_SHRINK = 0.75
ENVELOPE_END = 1.0 - 2.0**-20
ENVELOPE_PASS = -1e-6
LIFT_PANELS = 9
LIFT_NODES = 8
STABILITY = 0.2


# Oblique fields ------------------------------------------------------------


@dataclass
class ObliqueField:
    """Boundary operator β⁰u + β⃗·∇u with β⃗ defined on a neighbourhood of the patch."""

    beta: Callable[[np.ndarray], np.ndarray]
    beta0: Optional[PointFunction] = None
    mu0: float = 0.1
    rho_dbeta: Modulus = field(default_factory=ZeroModulus)
    dbeta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "oblique"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def constant(
        cls, vector: Sequence[float], beta0: float = 0.0, mu0: float = 0.1
    ) -> "ObliqueField":
        v = np.asarray(vector, dtype=float)

        def beta(points: np.ndarray) -> np.ndarray:
            return np.broadcast_to(v, (as_points(points).shape[0], 2)).copy()

        def dbeta(points: np.ndarray) -> np.ndarray:
            return np.zeros((as_points(points).shape[0], 2, 2))

        def b0(points: np.ndarray) -> np.ndarray:
            return np.full(as_points(points).shape[0], float(beta0))

        return cls(
            beta=beta,
            beta0=None if beta0 == 0.0 else b0,
            mu0=mu0,
            dbeta=dbeta,
            name="constant",
            params={"vector": v.tolist(), "beta0": beta0},
        )

    def jacobian(self, points: np.ndarray, h: float = 1e-5) -> np.ndarray:
        """``J[:, i, k] = ∂β^i/∂x_k``, analytic when available."""
        pts = as_points(points)
        if self.dbeta is not None:
            return np.asarray(self.dbeta(pts), dtype=float)
        out = np.empty((pts.shape[0], 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, :, k] = (self.beta(pts + e) - self.beta(pts - e)) / (2 * h)
        return out

    def zero_order(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        if self.beta0 is None:
            return np.zeros(pts.shape[0])
        return np.asarray(self.beta0(pts), dtype=float)

    def check(
        self, domain: GraphDomain, samples: int = 201, width: Optional[float] = None
    ) -> float:
        """Least |β⃗·ν|/|β⃗| over sampled boundary points; raises below μ₀."""
        bpts = domain.boundary_points(samples, width)
        b = self.beta(bpts)
        nu = domain.outward_normal(bpts[:, 0])
        mag = np.linalg.norm(b, axis=1)
        if np.any(mag <= 0):
            raise ObliquenessError("β⃗ vanishes on the boundary")
        ratio = np.abs(np.sum(b * nu, axis=1)) / mag
        worst = int(np.argmin(ratio))
        if ratio[worst] < self.mu0:
            raise ObliquenessError(
                f"Obliqueness fails at x = {bpts[worst].tolist()}: "
                f"|β·ν|/|β| = {ratio[worst]:.3g} < μ₀ = {self.mu0}"
            )
        return float(ratio.min())

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "params": self.params, "mu0": self.mu0}


# Straightening flow --------------------------------------------------------


class _Flow:
    """x(y) = Φ_{y_n}(x₀¹ + y¹, γ(x₀¹ + y¹)) for the flow of σβ⃗.

    The variational column ∂x/∂y¹ is carried along the flow.
    """

    def __init__(
        self, oblique: ObliqueField, domain: GraphDomain, x0: float, sigma: float
    ) -> None:
        self.oblique = oblique
        self.domain = domain
        self.x0 = float(x0)
        self.sigma = float(sigma)
        self.steps = FLOW_MIN_STEPS

    def _rhs(self, state: np.ndarray, scale: np.ndarray) -> np.ndarray:
        x = state[:, :2]
        j1 = state[:, 2:]
        v = self.sigma * self.oblique.beta(x)
        dv = self.sigma * self.oblique.jacobian(x)
        out = np.empty_like(state)
        out[:, :2] = scale[:, None] * v
        out[:, 2:] = scale[:, None] * np.einsum("nik,nk->ni", dv, j1)
        return out

    def _integrate(self, y: np.ndarray, steps: int) -> np.ndarray:
        s1 = self.x0 + y[:, 0]
        state = np.empty((y.shape[0], 4))
        state[:, 0] = s1
        state[:, 1] = self.domain.gamma(s1)
        state[:, 2] = 1.0
        state[:, 3] = self.domain.dgamma(s1)
        scale = y[:, 1]
        h = 1.0 / steps
        for _ in range(steps):
            k1 = self._rhs(state, scale)
            k2 = self._rhs(state + 0.5 * h * k1, scale)
            k3 = self._rhs(state + 0.5 * h * k2, scale)
            k4 = self._rhs(state + h * k3, scale)
            state = state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return state

    def calibrate(self, y: np.ndarray) -> int:
        """Halve the RK4 step until the Jacobian changes by less than FLOW_TOLERANCE."""
        steps = FLOW_MIN_STEPS
        prev = self._integrate(y, steps)
        while steps < FLOW_MAX_STEPS:
            steps *= 2
            cur = self._integrate(y, steps)
            if np.max(np.abs(cur - prev)) < FLOW_TOLERANCE:
                self.steps = steps
                return steps
            prev = cur
        raise NumericError(
            f"Flow integration did not settle within {FLOW_MAX_STEPS} RK4 steps"
        )

    def position(self, y: np.ndarray) -> np.ndarray:
        return self._integrate(as_points(y), self.steps)[:, :2]

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        """``J[:, i, k] = ∂x^i/∂y_k``; the y_n column is σβ⃗(x(y))."""
        state = self._integrate(as_points(y), self.steps)
        J = np.empty((state.shape[0], 2, 2))
        J[:, :, 0] = state[:, 2:]
        J[:, :, 1] = self.sigma * self.oblique.beta(state[:, :2])
        return J

    def invert(
        self, x: np.ndarray, tol: float = 1e-12, max_iter: int = 50
    ) -> np.ndarray:
        pts = as_points(x)
        b = self.sigma * self.oblique.beta(pts)
        normal_speed = np.where(np.abs(b[:, 1]) > 1e-12, b[:, 1], 1.0)
        y = np.column_stack([pts[:, 0] - self.x0, self.domain.psi0(pts) / normal_speed])
        for _ in range(max_iter):
            state = self._integrate(y, self.steps)
            res = state[:, :2] - pts
            J = np.empty((y.shape[0], 2, 2))
            J[:, :, 0] = state[:, 2:]
            J[:, :, 1] = self.sigma * self.oblique.beta(state[:, :2])
            step = np.linalg.solve(J, res[..., None])[..., 0]
            y = y - step
            if np.max(np.abs(step)) < tol:
                return y
        raise NumericError("Inverse straightening map did not converge")


def _flow_samples(r: float, n: int = 9) -> np.ndarray:
    y1 = np.linspace(-r, r, n)
    yn = np.linspace(0.0, r, n)
    Y1, YN = np.meshgrid(y1, yn)
    return np.column_stack([Y1.ravel(), YN.ravel()])


def straightening_flow(
    oblique: ObliqueField,
    domain: GraphDomain,
    x0: float,
    r: float,
    max_shrink: int = 20,
) -> DiffeoMap:
    """Map x ↦ y straightening β⃗ into the normal direction near (x₀, γ(x₀)).

    The inverse y ↦ x integrates dx/dyₙ = σβ⃗(x) from the boundary point
    (x₀ + y¹, γ(x₀ + y¹)) by RK4 together with the variational equation for
    ∂x/∂y¹. σ = −sign(β⃗·ν) orients the flow into the domain. When the flow
    leaves the patch the radius shrinks by RADIUS_SHRINK with a warning.

    The returned map's ``forward`` is x ↦ y; its metadata carries the radius,
    step count, σ, the tangency error |∂x/∂yₙ − σβ⃗| on the boundary image and
    the second-derivative growth ratio.
    """
    oblique.check(domain, width=min(domain.b, abs(x0) + r))
    base = np.array([[x0, float(domain.gamma(np.array([x0]))[0])]])
    nu = domain.outward_normal(base[:, 0])
    sigma = -float(np.sign(np.sum(oblique.beta(base) * nu)))
    flow = _Flow(oblique, domain, x0, sigma)

    radius = float(r)
    for _ in range(max_shrink):
        samples = _flow_samples(radius)
        flow.calibrate(samples)
        x = flow.position(samples)
        leaves = np.abs(x[:, 0]) >= domain.b
        outside = (samples[:, 1] > 0) & (domain.psi0(x) <= 0)
        if not (leaves.any() or outside.any()):
            break
        logger.warning(
            f"Straightening flow leaves the patch at r = {radius:.4g}; shrinking"
        )
        radius *= RADIUS_SHRINK
    else:
        raise ParameterError(
            "Straightening flow leaves the patch at every radius tried"
        )

    samples = _flow_samples(radius)
    boundary = np.column_stack([np.linspace(-radius, radius, 41), np.zeros(41)])
    Jb = flow.jacobian(boundary)
    xb = flow.position(boundary)
    tangency = float(np.max(np.abs(Jb[:, :, 1] - sigma * oblique.beta(xb))))

    def validity(points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        return (np.abs(pts[:, 0] - x0) < radius) & (domain.psi0(pts) >= 0)

    def forward_jacobian(points: np.ndarray) -> np.ndarray:
        return np.linalg.inv(flow.jacobian(flow.invert(points)))

    diffeo = DiffeoMap(
        forward=flow.invert,
        inverse=flow.position,
        validity=validity,
        jacobian_fn=forward_jacobian,
        inverse_jacobian_fn=flow.jacobian,
        fd_step=1e-4 * radius,
        name="straightening_flow",
    )

    interior = samples[(samples[:, 1] > 0) & (samples[:, 1] < radius)]
    H = diffeo.second_derivative(interior, inverse=True)
    mag = np.sqrt(np.sum(H**2, axis=(1, 2, 3)))
    gap = radius - interior[:, 1]
    rho = oblique.rho_dbeta(gap) + domain.rho_dpsi0(gap)
    ratio = _safe_ratio(mag * gap, rho)
    diffeo.metadata.update(
        {
            "radius": radius,
            "sigma": sigma,
            "steps": flow.steps,
            "tangency_error": tangency,
            "second_derivative_sup": float(mag.max()) if mag.size else 0.0,
            "second_derivative_ratio": float(ratio.max()) if ratio.size else 0.0,
        }
    )
    logger.info(
        f"Straightening flow: r={radius:.4g}, {flow.steps} RK4 steps, "
        f"tangency {tangency:.2e}"
    )
    return diffeo


# Envelope ODE --------------------------------------------------------------


@dataclass
class EnvelopeProblem:
    """dX/dt = A(t)X + B(t) on [0, τ) with the growth hypotheses on A and B."""

    A: Callable[[float], ArrayLike]
    B: Callable[[float], ArrayLike]
    tau: float
    K0: float
    K1: float
    mu: float
    rho: Modulus
    x0: ArrayLike

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ParameterError(f"τ must be positive, got {self.tau}")
        if not 0.0 < self.mu < 1.0:
            raise ParameterError(f"μ must lie in (0, 1), got {self.mu}")
        if self.K0 < 0 or self.K1 < 0:
            raise ParameterError("K₀ and K₁ must be nonnegative")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))

    @property
    def N0(self) -> float:
        start = self.tau * float(np.linalg.norm(self.x0)) / float(self.rho(self.tau))
        return max(start, self.K1 / (1.0 - self.mu))

    def bound(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        gap = self.tau - t
        return self.N0 * np.exp(self.K0 * t) * self.rho(gap) / gap

    def matrix(self, t: float) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.A(t), dtype=float))

    def forcing(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.B(t), dtype=float))

    def check_hypotheses(self, t: np.ndarray) -> None:
        """Raise RejectedInputError at the first sampled t violating a hypothesis."""
        gap = self.tau - t
        rho = self.rho(gap)
        if np.any(rho <= 0):
            bad = t[int(np.argmax(rho <= 0))]
            raise RejectedInputError(
                f"ϱ(τ − t) must be positive; fails at t = {bad:.6g}"
            )
        scaled = rho / gap**self.mu
        # gap decreases along t, so t^{-μ}ϱ nonincreasing means scaled grows here.
        drop = np.flatnonzero(np.diff(scaled) < -1e-12 * np.abs(scaled[1:]))
        if drop.size:
            raise RejectedInputError(
                f"t^(-μ)ϱ(t) is not nonincreasing; fails at t = {t[drop[0] + 1]:.6g}"
            )
        for tk, gk, rk in zip(t, gap, rho):
            a_norm = float(np.linalg.norm(self.matrix(tk), ord=2))
            if a_norm > self.K0 * (1 + 1e-12) + 1e-14:
                raise RejectedInputError(
                    f"|A(t)| = {a_norm:.6g} exceeds K₀ at t = {tk:.6g}"
                )
            b_norm = float(np.linalg.norm(self.forcing(tk)))
            limit = self.K1 * np.exp(self.K0 * tk) * rk / gk**2
            if b_norm > limit * (1 + 1e-9) + 1e-300:
                raise RejectedInputError(
                    f"|B(t)| = {b_norm:.6g} exceeds its bound {limit:.6g} "
                    f"at t = {tk:.6g}"
                )


@dataclass
class EnvelopeResult:
    """Margin min_t (bound − |X|)/bound along the integrated trajectory."""

    passed: bool
    margin: float
    t_at_margin: float
    steps: int
    N0: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "margin": self.margin,
            "t_at_margin": self.t_at_margin,
            "steps": self.steps,
            "N0": self.N0,
        }


def envelope_check(problem: EnvelopeProblem, step: float = 1e-3) -> EnvelopeResult:
    """Integrate to t = τ(1 − 2⁻²⁰) and compare |X(t)| with the envelope.

    RK4 runs in s = −ln(1 − t/τ) with fixed step ``step``, so dt = (τ − t)ds
    and the endpoint sits at s = 20 ln 2.
    """
    tau = problem.tau
    s_end = -np.log(1.0 - ENVELOPE_END)
    n = int(np.ceil(s_end / step))
    h = s_end / n
    s_grid = np.linspace(0.0, s_end, n + 1)
    t_grid = tau * (1.0 - np.exp(-s_grid))
    stage_t = tau * (1.0 - np.exp(-(s_grid[:-1] + 0.5 * h)))
    problem.check_hypotheses(np.sort(np.concatenate([t_grid, stage_t])))

    def rhs(s: float, X: np.ndarray) -> np.ndarray:
        t = tau * (1.0 - np.exp(-s))
        return (tau - t) * (problem.matrix(t) @ X + problem.forcing(t))

    X = problem.x0.copy()
    bounds = problem.bound(t_grid)
    margins = np.empty(n + 1)
    margins[0] = (bounds[0] - np.linalg.norm(X)) / bounds[0]
    for k in range(n):
        s = s_grid[k]
        k1 = rhs(s, X)
        k2 = rhs(s + 0.5 * h, X + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, X + 0.5 * h * k2)
        k4 = rhs(s + h, X + h * k3)
        X = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        margins[k + 1] = (bounds[k + 1] - np.linalg.norm(X)) / bounds[k + 1]
    worst = int(np.argmin(margins))
    margin = float(margins[worst])
    return EnvelopeResult(
        passed=margin >= ENVELOPE_PASS,
        margin=margin,
        t_at_margin=float(t_grid[worst]),
        steps=n,
        N0=problem.N0,
    )


# Boundary lift -------------------------------------------------------------


def _c1_norm(values: np.ndarray, gradient: np.ndarray) -> float:
    """sup |v| + sup |∇v| over the sampled points."""
    return float(np.max(np.abs(values)) + np.max(np.linalg.norm(gradient, axis=1)))


@dataclass
class LiftReport:
    """Derivative-bound ratios of a boundary lift at one FD step."""

    boundary_error: float
    norm_ratio: float
    second_ratio: float
    third_ratio: float
    modulus_ratio: float
    fd_step: float

    @property
    def ratios(self) -> Tuple[float, float, float, float]:
        return (
            self.norm_ratio,
            self.second_ratio,
            self.third_ratio,
            self.modulus_ratio,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "boundary_error": self.boundary_error,
            "norm_ratio": self.norm_ratio,
            "second_ratio": self.second_ratio,
            "third_ratio": self.third_ratio,
            "modulus_ratio": self.modulus_ratio,
            "fd_step": self.fd_step,
        }


class BoundaryLift:
    """v(x) = −∫_{x²}^{b} g̃(x¹, t) dt with g̃ the Dini extension of g."""

    def __init__(
        self,
        g: PointFunction,
        domain: GraphDomain,
        b: float,
        zeta: Optional[MollifierSpec] = None,
        rho_dg: Optional[Modulus] = None,
    ) -> None:
        if not 0.0 < b <= domain.b:
            raise ParameterError(
                f"Lift height b = {b} must lie in (0, {domain.b}] for this patch"
            )
        self.g = g
        self.domain = domain
        self.b = float(b)
        self.zeta = zeta or MollifierSpec()
        self.extension = DiniExtension(g, domain, self.zeta)
        self.rho_dg = rho_dg
        nodes, weights = np.polynomial.legendre.leggauss(LIFT_NODES)
        self._nodes = 0.5 * (nodes + 1.0)
        self._weights = 0.5 * weights

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        lo = pts[:, 1]
        span = self.b - lo
        # Panels graded geometrically toward the lower limit.
        edges = np.concatenate([[0.0], 2.0 ** -np.arange(LIFT_PANELS - 1, -1, -1)])
        total = np.zeros(pts.shape[0])
        for a, c in zip(edges[:-1], edges[1:]):
            t = lo[:, None] + span[:, None] * (a + (c - a) * self._nodes[None, :])
            qpts = np.column_stack([np.repeat(pts[:, 0], LIFT_NODES), t.ravel()])
            vals = self.extension(qpts).reshape(pts.shape[0], LIFT_NODES)
            total += (vals @ self._weights) * (c - a)
        return -span * total

    def report(
        self,
        points: np.ndarray,
        fd_step: float = 1e-3,
        seed: int = 0,
        pairs: int = 400,
    ) -> LiftReport:
        """Four bound ratios with ϱ_{Dg}, ϱ_{Dγ} at unit scale constants."""
        pts = as_points(points)
        bpts = self.domain.boundary_points(21, width=self.domain.b / 2)
        dn = (self(bpts + [0.0, fd_step]) - self(bpts - [0.0, fd_step])) / (2 * fd_step)
        boundary_error = float(np.max(np.abs(dn - self.g(bpts))))

        grad_g = fd_gradient(self.g, pts, fd_step)
        rho_dg = self.rho_dg or _pairwise_modulus(pts, grad_g)
        rho_sum = SumModulus([rho_dg, self.domain.rho_dgamma])
        g_norm = _c1_norm(self.g(pts), grad_g)
        v_norm = _c1_norm(self(pts), fd_gradient(self, pts, fd_step))
        hess = fd_hessian(self, pts, fd_step)
        d2 = np.linalg.norm(hess, axis=(1, 2))
        dini_term = 0.0
        if not rho_sum.is_zero():
            dini_term = dini_integral(rho_sum, upper=2 * self.b).value
        scale = g_norm + dini_term
        second_ratio = float(d2.max() / scale) if scale > 0 else 0.0
        norm_ratio = v_norm / g_norm if g_norm > 0 else 0.0

        d = np.abs(self.domain.distance_to_boundary(pts))
        third = fd_third(self, pts, fd_step)
        d3 = np.sqrt(np.sum(third**2, axis=(1, 2, 3)))
        third_ratio = _safe_ratio(d3 * d, rho_sum(d))

        rng = np.random.default_rng(seed)
        i = rng.integers(0, pts.shape[0], pairs)
        j = rng.integers(0, pts.shape[0], pairs)
        keep = i != j
        i, j = i[keep], j[keep]
        dist = np.linalg.norm(pts[i] - pts[j], axis=1)
        diff = np.linalg.norm(hess[i] - hess[j], axis=(1, 2))
        envelope = IntegralModulus(rho_sum, a=max(1.0, float(dist.max(initial=0.0))))
        bound = np.zeros_like(diff) if rho_sum.is_zero() else envelope(dist)
        modulus_ratio = _safe_ratio(diff, bound)
        return LiftReport(
            boundary_error=boundary_error,
            norm_ratio=float(norm_ratio),
            second_ratio=second_ratio,
            third_ratio=float(third_ratio.max()) if third_ratio.size else 0.0,
            modulus_ratio=float(modulus_ratio.max()) if modulus_ratio.size else 0.0,
            fd_step=fd_step,
        )


def boundary_lift(
    g: PointFunction,
    domain: GraphDomain,
    b: float,
    zeta: Optional[MollifierSpec] = None,
    rho_dg: Optional[Modulus] = None,
) -> BoundaryLift:
    """C^{2,Dini} function v with D_n v = g on the boundary of the patch U_b."""
    return BoundaryLift(g, domain, b, zeta, rho_dg)


def lift_reports_stable(
    coarse: LiftReport, fine: LiftReport, tol: float = STABILITY
) -> bool:
    """Every ratio finite and within ``tol`` (relative) across the two steps."""
    for a, c in zip(coarse.ratios, fine.ratios):
        if not (np.isfinite(a) and np.isfinite(c)):
            return False
        if abs(a - c) > tol * max(abs(a), abs(c)) + 1e-6:
            return False
    return True


# Reduction to Neumann data -------------------------------------------------


@dataclass
class ObliqueProblem:
    """𝓛u = f in Ω with β⁰u + β⃗·∇u = g on ∂Ω, plus the data moduli."""

    coeffs: CoefficientField
    oblique: ObliqueField
    f: PointFunction
    g: PointFunction
    omega_f: Modulus = field(default_factory=ZeroModulus)
    omega_A: Modulus = field(default_factory=ZeroModulus)
    omega_b: Modulus = field(default_factory=ZeroModulus)
    omega_c: Modulus = field(default_factory=ZeroModulus)
    rho_g: Modulus = field(default_factory=ZeroModulus)
    rho_dg: Modulus = field(default_factory=ZeroModulus)


@dataclass
class ReducedProblem:
    """The half-ball problem with D_n ũ = 0 and the transport chain behind it."""

    absorbed_g: PointFunction
    straightening: DiffeoMap
    lift: BoundaryLift
    flattening: FlatteningResult
    f0: PointFunction
    omega_f0: Modulus
    u_reduced: PointFunction
    to_reduced: Callable[[np.ndarray], np.ndarray]
    provenance: Dict[str, Any]

    def flat_trace_derivative(
        self, half_width: Optional[float] = None, n: int = 41, h: float = 1e-4
    ) -> float:
        """max |D_n ũ| on the flat piece, one-sided second-order differences."""
        R = 4.0 * self.flattening.s0
        w = 0.5 * R if half_width is None else half_width
        z1 = np.linspace(-w, w, n)
        rows = [np.column_stack([z1, np.full(n, k * h)]) for k in range(3)]
        vals = [self.u_reduced(row) for row in rows]
        dn = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
        return float(np.max(np.abs(dn)))


def _omega_f0(
    problem: ObliqueProblem,
    domain: GraphDomain,
    coeffs: CoefficientField,
    r: float,
    samples: np.ndarray,
) -> Modulus:
    """ω_f + ∫ϱ_{Dg}/s + (|g|₁ + ∫₀^r ϱ_{Dg}/t)ω₀ + ω₁ with unit constants."""
    b_sup = float(np.max(np.linalg.norm(coeffs.vector("b", samples), axis=1)))
    c_sup = float(np.max(np.abs(coeffs.scalar("c", samples))))
    terms: List[Modulus] = [problem.omega_A, problem.omega_b, problem.omega_c]
    if b_sup > 0:
        terms.append(PowerModulus(1.0, b_sup))
    if c_sup > 0:
        terms.append(PowerModulus(1.0, c_sup))
    omega0 = SumModulus(terms)

    def integral_to(rho: Modulus, upper: float) -> float:
        return 0.0 if rho.is_zero() else float(dini_integral(rho, upper=upper).value)

    i_gamma = integral_to(domain.rho_dgamma, r)
    i_dg = integral_to(problem.rho_dg, r)
    g_norm = _c1_norm(problem.g(samples), fd_gradient(problem.g, samples, 1e-5))

    pieces: List[Modulus] = [problem.omega_f]
    if not problem.rho_dg.is_zero():
        pieces.append(IntegralModulus(problem.rho_dg))
    pieces.append((g_norm + i_dg) * omega0)
    if i_gamma > 0:
        drift = [PowerModulus(1.0, b_sup)] if b_sup > 0 else []
        pieces.append(i_gamma * SumModulus([problem.omega_A] + drift))
    boundary_terms = SumModulus([problem.rho_g, domain.rho_dgamma])
    if not boundary_terms.is_zero():
        pieces.append(IntegralModulus(boundary_terms))
    return SumModulus(pieces)


def reduce_to_neumann(
    problem: ObliqueProblem,
    domain: GraphDomain,
    x0: float,
    u: PointFunction,
    r: float = 0.2,
    s: Optional[float] = None,
    zeta: Optional[MollifierSpec] = None,
    resolution: int = 17,
    tracer: Optional[Tracer] = None,
) -> ReducedProblem:
    """Absorb β⁰u, straighten β⃗, lift the boundary data and flatten.

    Each stage is logged on ``tracer`` with an input hash and the empirical
    constants it produced; the reduced problem carries ``tracer``'s run as
    its provenance.
    """
    zeta = zeta or MollifierSpec()
    tracer = tracer or Tracer()
    own_run = tracer.current_run is None
    if own_run:
        tracer.start_run(f"reduce_to_neumann@{x0:g}")

    # (1) absorb β⁰u into the boundary data
    def g1(points: np.ndarray) -> np.ndarray:
        return problem.g(points) - problem.oblique.zero_order(points) * u(points)

    bpts = domain.boundary_points(21, width=min(domain.b, abs(x0) + r))
    tracer.log_stage(
        StageKind.ABSORB,
        inputs={"x0": x0, "beta0": problem.oblique.to_dict()},
        constants={"g1_sup": float(np.max(np.abs(g1(bpts))))},
    )

    # (2) straighten β⃗ into the y_n direction
    phi = straightening_flow(problem.oblique, domain, x0, r)
    sigma = phi.metadata["sigma"]
    radius = phi.metadata["radius"]
    tracer.log_stage(
        StageKind.STRAIGHTEN,
        inputs={"x0": x0, "r": r, "oblique": problem.oblique.to_dict()},
        constants={
            k: phi.metadata[k]
            for k in ("radius", "steps", "tangency_error", "second_derivative_ratio")
        },
    )

    def u_hat(y: np.ndarray) -> np.ndarray:
        return u(phi.inverse(y))

    def g_hat(y: np.ndarray) -> np.ndarray:
        yy = as_points(y)
        trace = np.column_stack([yy[:, 0], np.zeros(yy.shape[0])])
        return sigma * g1(phi.inverse(trace))

    def A_hat(y: np.ndarray) -> np.ndarray:
        x = phi.inverse(y)
        return transform_operator(phi, problem.coeffs.matrix, x, problem.coeffs.b)[0]

    def b_hat(y: np.ndarray) -> np.ndarray:
        x = phi.inverse(y)
        return transform_operator(phi, problem.coeffs.matrix, x, problem.coeffs.b)[1]

    def c_hat(y: np.ndarray) -> np.ndarray:
        return problem.coeffs.scalar("c", phi.inverse(y))

    def f_hat(y: np.ndarray) -> np.ndarray:
        return problem.f(phi.inverse(y))

    # (3) subtract the lift of the straightened data on the flat y-patch
    flat = GraphDomain.flat(b=radius)
    lift_height = 0.5 * radius
    v = boundary_lift(g_hat, flat, lift_height, zeta)
    fd = 1e-3 * radius

    def f0(y: np.ndarray) -> np.ndarray:
        yy = as_points(y)
        Lv = (
            np.einsum("nij,nij->n", A_hat(yy), fd_hessian(v, yy, fd))
            + np.einsum("ni,ni->n", b_hat(yy), fd_gradient(v, yy, fd))
            + c_hat(yy) * v(yy)
        )
        return f_hat(yy) - Lv

    def u0(y: np.ndarray) -> np.ndarray:
        return u_hat(y) - v(y)

    samples = np.column_stack(
        [np.linspace(-0.5 * radius, 0.5 * radius, 9), np.full(9, 0.25 * radius)]
    )
    omega_f0 = _omega_f0(problem, domain, problem.coeffs, radius, phi.inverse(samples))
    tracer.log_stage(
        StageKind.LIFT,
        inputs={"b": lift_height, "sigma": sigma},
        constants={"omega_f0_at_half_r": float(omega_f0(0.5 * radius))},
    )

    # (4) flatten the y-patch by its regularized distance
    flat_s = s if s is not None else 0.5 * lift_height
    coeffs_hat = CoefficientField(
        A=A_hat, b=b_hat, c=c_hat, symmetric=True, name="straightened"
    )
    flattening = flatten_by_distance(
        flat,
        0.0,
        flat_s,
        coeffs_hat.matrix,
        f0,
        u0,
        b=b_hat,
        c=c_hat,
        zeta=zeta,
        resolution=resolution,
    )
    tracer.log_stage(
        StageKind.FLATTEN,
        inputs={"s": flat_s, "resolution": resolution},
        constants=flattening.to_dict(),
    )

    flat_map = flattening.map

    def u_reduced(z: np.ndarray) -> np.ndarray:
        return u0(flat_map.inverse(z))

    def to_reduced(x: np.ndarray) -> np.ndarray:
        return flat_map.forward(phi.forward(x))

    if own_run:
        tracer.end_run()
    run = tracer.last_run if own_run else tracer.current_run
    provenance = run.to_dict() if run is not None else {}
    return ReducedProblem(
        absorbed_g=g1,
        straightening=phi,
        lift=v,
        flattening=flattening,
        f0=f0,
        omega_f0=omega_f0,
        u_reduced=u_reduced,
        to_reduced=to_reduced,
        provenance=provenance,
    )
