"""Campanato excess, dyadic decay studies and assembled modulus bounds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats
from typing_extensions import Literal

from .exceptions import ParameterError, ResolutionError
from .fields import Grid2D, PointFunction, ScalarField, p_mean
from .modulus import (
    Modulus,
    PowerModulus,
    SumModulus,
    ZeroModulus,
    classify,
    dini_integral,
)
from .solvers import DiscreteSolution
from .store import csv_table
from .transforms import transform_chain

logger = logging.getLogger(__name__)

MIN_SAMPLES = 50
PAIR_COUNT = 2000
PAIR_BINS = 20
COVERAGE = 0.99
VANISHING_RATIO = 0.25
BETA_CHOICES = (0.9, 0.75, 0.5)
GRID_FLOOR = 1e-12

Mode = Literal["gradient", "hessian"]
FieldLike = Union[DiscreteSolution, ScalarField]


def _scalar_field(u: FieldLike) -> ScalarField:
    return u.field if isinstance(u, DiscreteSolution) else u


def _derivative_values(u: FieldLike, mode: Mode) -> np.ndarray:
    """Grid-shaped derivative components: (Dx, Dy) or (Dxx, Dxy, Dyy)."""
    f = _scalar_field(u)
    if mode == "gradient":
        if isinstance(u, DiscreteSolution):
            return u.gradient.values
        return f.gradient().values
    if mode == "hessian":
        H = u.hessian.values if isinstance(u, DiscreteSolution) else f.hessian().values
        return np.stack([H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]], axis=-1)
    raise ParameterError(f"Unknown excess mode {mode!r}")


def _deviation(samples: np.ndarray, q: np.ndarray, mode: Mode) -> np.ndarray:
    d = samples - q[None, :]
    if mode == "gradient":
        return np.sqrt(np.sum(d**2, axis=1))
    return np.sqrt(d[:, 0] ** 2 + 2.0 * d[:, 1] ** 2 + d[:, 2] ** 2)


# Excess --------------------------------------------------------------------


def _ball_samples(
    u: FieldLike, center: Sequence[float], r: float, mode: Mode
) -> np.ndarray:
    f = _scalar_field(u)
    values = _derivative_values(u, mode)
    mask = f.grid.ball_mask(center, r)
    samples = values[mask]
    samples = samples[np.all(np.isfinite(samples), axis=1)]
    if samples.shape[0] < MIN_SAMPLES:
        raise ResolutionError(
            f"Ball B({list(center)}, {r:.3g}) holds {samples.shape[0]} samples; "
            f"need {MIN_SAMPLES}"
        )
    return samples


def excess_minimizer(
    samples: np.ndarray, p: float, mode: Mode
) -> Tuple[float, np.ndarray]:
    """inf_q (⨍|D − q|^p)^{1/p} by Nelder–Mead from the median and the mean,
    followed by a coordinate-wise golden-section polish.
    """

    def objective(q: np.ndarray) -> float:
        return p_mean(_deviation(samples, np.asarray(q, dtype=float), mode), p)

    seeds = [np.median(samples, axis=0), samples.mean(axis=0)]
    scale = float(np.max(np.abs(samples))) or 1.0
    best_q = seeds[0]
    best = objective(best_q)
    for seed in seeds:
        val = objective(seed)
        if val < best:
            best, best_q = val, seed
        if best == 0.0:
            return 0.0, best_q
        res = optimize.minimize(
            objective,
            seed,
            method="Nelder-Mead",
            options={"xatol": 1e-10 * scale, "fatol": 1e-14 * scale, "maxiter": 4000},
        )
        if res.fun < best:
            best, best_q = float(res.fun), np.asarray(res.x)

    q = best_q.copy()
    delta = 1e-3 * scale
    for k in range(q.size):

        def along(v: float, k: int = k) -> float:
            trial = q.copy()
            trial[k] = v
            return objective(trial)

        try:
            res = optimize.minimize_scalar(
                along, bracket=(q[k] - delta, q[k] + delta), method="golden"
            )
        except (RuntimeError, ValueError):
            continue
        if res.fun < best:
            best = float(res.fun)
            q[k] = float(res.x)
    return best, q


def excess(
    u: FieldLike,
    center: Sequence[float],
    r: float,
    p: float = 0.5,
    mode: Mode = "gradient",
) -> float:
    """φ(x̄, r) = inf_q (⨍_{B(x̄,r)} |Du − q|^p)^{1/p} (or D²u, q symmetric)."""
    samples = _ball_samples(u, center, r, mode)
    value, _ = excess_minimizer(samples, p, mode)
    return value


@dataclass
class ExcessTable:
    """Dyadic excess values at one center with the fitted decay exponent."""

    center: Tuple[float, float]
    radii: List[float]
    values: List[float]
    p: float
    mode: str
    slope: float
    slope_stderr: float
    label: str = "boundary"

    @property
    def band(self) -> Tuple[float, float]:
        half = 2.0 * self.slope_stderr
        return (self.slope - half, self.slope + half)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": list(self.center),
            "radii": self.radii,
            "values": self.values,
            "p": self.p,
            "mode": self.mode,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "band": list(self.band),
            "label": self.label,
        }

    def to_csv(self) -> str:
        return csv_table(["r", "phi"], [self.radii, self.values])

    def plot_data(self) -> Dict[str, Any]:
        return {
            "x": self.radii,
            "y": self.values,
            "xscale": "log",
            "yscale": "log",
            "label": str(self.center),
        }


def fit_decay(
    radii: Sequence[float], values: Sequence[float], floor: float = GRID_FLOOR
) -> Tuple[float, float]:
    """Slope of log φ against log r with its standard error.

    The slope is NaN below two usable points and the error below three.
    """
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > floor * max(1.0, float(v.max(initial=0.0)))
    if keep.sum() < 2:
        return np.nan, np.nan
    if keep.sum() == 2:
        lr, lv = np.log(r[keep]), np.log(v[keep])
        return float((lv[1] - lv[0]) / (lr[1] - lr[0])), np.nan
    fit = stats.linregress(np.log(r[keep]), np.log(v[keep]))
    return float(fit.slope), float(fit.stderr)


@dataclass
class StepFit:
    """Empirical (C₀, C) of the one-step inequality at one center."""

    C0: float
    C: float
    residuals: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {"C0": self.C0, "C": self.C, "residuals": self.residuals}


@dataclass
class DecayStudy:
    """Excess tables, one-step fits and the comparability log."""

    tables: List[ExcessTable]
    fits: List[StepFit]
    comparability: List[Dict[str, Any]] = field(default_factory=list)
    kappa: float = 0.25

    def boundary_tables(self) -> List[ExcessTable]:
        return [t for t in self.tables if t.label == "boundary"]

    def C0(self) -> float:
        vals = [f.C0 for f in self.fits if np.isfinite(f.C0)]
        return float(max(vals)) if vals else np.nan

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "tables": [t.to_dict() for t in self.tables],
            "fits": [f.to_dict() for f in self.fits],
            "comparability": self.comparability,
        }

    def plot_data(self) -> Dict[str, Any]:
        return {"series": [t.plot_data() for t in self.tables]}


def _fit_one_step(
    radii: np.ndarray,
    values: np.ndarray,
    forcing: np.ndarray,
    kappa: float,
    p: float,
    dim: int = 2,
) -> StepFit:
    """φ(κr) ≤ 4^{(1−p)/p}C₀κφ(r) + C(κ^{−n/p} + 1)F(r) on consecutive radii."""
    factor = 4.0 ** ((1.0 - p) / p) * kappa
    weight = kappa ** (-dim / p) + 1.0
    big, small = values[:-1], values[1:]
    F = forcing[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(big > 0, small / (factor * big), 0.0)
    C0 = float(np.median(ratios)) if ratios.size else 0.0
    excess_part = np.maximum(small - factor * C0 * big, 0.0)
    has_forcing = F > 0
    C = 0.0
    if has_forcing.any():
        C = float(np.max(excess_part[has_forcing] / (weight * F[has_forcing])))
    uncovered = (~has_forcing) & (excess_part > 0)
    if uncovered.any():
        C0 = float(max(C0, np.max(ratios[uncovered])))
    residuals = factor * C0 * big + C * weight * F - small
    return StepFit(C0=C0, C=C, residuals=residuals.tolist())


def decay_study(
    u: FieldLike,
    centers: Sequence[Sequence[float]],
    r0: float,
    kappa: float = 0.25,
    count: int = 4,
    p: float = 0.5,
    mode: Mode = "gradient",
    omega_A: Optional[Modulus] = None,
    omega_data: Optional[Modulus] = None,
    flat_y: float = 0.0,
) -> DecayStudy:
    """Dyadic excess tables r_k = κᵏr₀ at every center with the one-step fit.

    Centers on the flat line are labelled ``boundary``; the rest ``interior``.
    Radii whose balls hold fewer than MIN_SAMPLES nodes are dropped.
    """
    if not 0.0 < kappa < 1.0:
        raise ParameterError(f"kappa must lie in (0, 1), got {kappa}")
    omega_A = omega_A or ZeroModulus()
    omega_data = omega_data or ZeroModulus()
    f = _scalar_field(u)
    deriv = _derivative_values(u, "gradient" if mode == "gradient" else "hessian")
    mag = np.sqrt(np.sum(np.where(np.isfinite(deriv), deriv, 0.0) ** 2, axis=-1))

    tables: List[ExcessTable] = []
    fits: List[StepFit] = []
    comparability: List[Dict[str, Any]] = []
    for c in centers:
        center = (float(c[0]), float(c[1]))
        radii: List[float] = []
        values: List[float] = []
        for k in range(count):
            r = r0 * kappa**k
            try:
                values.append(excess(u, center, r, p, mode))
                radii.append(r)
            except ResolutionError:
                logger.debug(f"Dropping r={r:.3g} at {center}: too few samples")
                break
        slope, stderr = fit_decay(radii, values)
        label = "boundary" if abs(center[1] - flat_y) < 1e-12 else "interior"
        tables.append(ExcessTable(center, radii, values, p, mode, slope, stderr, label))

        r_arr = np.asarray(radii)
        balls = [f.grid.ball_mask(center, 2 * r) for r in r_arr]
        sup = np.array([float(mag[ball].max(initial=0.0)) for ball in balls])
        forcing = omega_A(np.minimum(2 * r_arr, omega_A.a)) * sup
        forcing = forcing + omega_data(np.minimum(2 * r_arr, omega_data.a))
        fits.append(
            _fit_one_step(r_arr, np.asarray(values), np.asarray(forcing), kappa, p)
        )

        if label == "interior":
            height = center[1] - flat_y
            foot = (center[0], flat_y)
            try:
                near = excess(u, center, 0.5 * height, p, mode)
                far = excess(u, foot, 2.0 * height, p, mode)
            except ResolutionError:
                continue
            ratio = near / far if far > 0 else (0.0 if near == 0 else np.inf)
            comparability.append(
                {
                    "center": list(center),
                    "foot": list(foot),
                    "rho": 0.5 * height,
                    "R": 2.0 * height,
                    "ratio": ratio,
                }
            )
            logger.info(f"Comparability φ(x,ρ)/φ(x̄,R) at {center}: {ratio:.3g}")

    return DecayStudy(
        tables=tables, fits=fits, comparability=comparability, kappa=kappa
    )


# Assembled bounds ----------------------------------------------------------


def _hat_star(omega: Modulus, kappa: float, beta: float) -> Tuple[Modulus, Modulus]:
    if omega.is_zero():
        return ZeroModulus(), ZeroModulus()
    chain = transform_chain(omega, kappa, min(beta, 0.99))
    return chain.hat, chain.star


def choose_beta(C0: float, kappa: float, p: float) -> float:
    """Largest β in BETA_CHOICES with 4^{(1−p)/p}C₀κ ≤ κ^β."""
    lhs = 4.0 ** ((1.0 - p) / p) * C0 * kappa
    for beta in BETA_CHOICES:
        if lhs <= kappa**beta:
            return beta
    logger.warning(
        f"No β in {BETA_CHOICES} satisfies the smallness relation "
        f"(lhs = {lhs:.3g}); using {BETA_CHOICES[-1]}"
    )
    return BETA_CHOICES[-1]


@dataclass
class BoundAssembly:
    """Measured pair differences against the assembled right-hand side."""

    mode: str
    beta: float
    distances: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    C_fit: float
    coverage: float
    vanishing_ratio: float
    vanishing_checked: bool
    norms: Dict[str, float]
    rhs_modulus: Modulus
    C_max: float = np.inf

    @property
    def passed(self) -> bool:
        ok = (
            np.isfinite(self.C_fit)
            and self.C_fit <= self.C_max
            and self.coverage >= COVERAGE
        )
        if self.vanishing_checked:
            ok = ok and self.vanishing_ratio <= VANISHING_RATIO
        return bool(ok)

    @property
    def slack(self) -> Dict[str, float]:
        gap = self.C_fit * self.rhs - self.lhs
        return {
            "min": float(gap.min()),
            "median": float(np.median(gap)),
            "max": float(gap.max()),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "beta": self.beta,
            "C_fit": self.C_fit,
            "coverage": self.coverage,
            "vanishing_ratio": self.vanishing_ratio,
            "vanishing_checked": self.vanishing_checked,
            "norms": self.norms,
            "slack": self.slack,
            "passed": self.passed,
        }

    def to_csv(self) -> str:
        order = np.argsort(self.distances, kind="stable")
        return csv_table(
            ["distance", "lhs", "rhs"],
            [self.distances[order], self.lhs[order], self.rhs[order]],
        )


def _sample_pairs(
    grid: Grid2D,
    inside: np.ndarray,
    d_min: float,
    d_max: float,
    count: int,
    seed: int,
    region: Any,
) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    pts = grid.points()[inside.ravel()]
    if pts.shape[0] == 0:
        raise ResolutionError(
            "No grid nodes inside the sampling region; refine the grid or enlarge r0"
        )
    per_bin = int(np.ceil(count / PAIR_BINS))
    edges = np.linspace(np.log(d_min), np.log(d_max), PAIR_BINS + 1)
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        got = 0
        for _ in range(50):
            need = per_bin - got
            if need <= 0:
                break
            x = pts[rng.integers(0, pts.shape[0], 4 * need)]
            d = np.exp(rng.uniform(lo, hi, 4 * need))
            theta = rng.uniform(0.0, 2.0 * np.pi, 4 * need)
            y = x + d[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
            ok = region(y)
            x, y = x[ok][:need], y[ok][:need]
            xs.append(x)
            ys.append(y)
            got += x.shape[0]
    return np.vstack(xs)[:count], np.vstack(ys)[:count]


def modulus_bound_compare(
    u: DiscreteSolution,
    omega_A: Modulus,
    omega_data: Modulus,
    mode: Mode = "gradient",
    kappa: float = 0.25,
    beta: Optional[float] = None,
    C0: Optional[float] = None,
    p: float = 0.5,
    center: Sequence[float] = (0.0, 0.0),
    radius: float = 1.0,
    pairs: int = PAIR_COUNT,
    seed: int = 0,
    d_min: Optional[float] = None,
    C_max: float = np.inf,
) -> BoundAssembly:
    """Compare |Du(x) − Du(y)| (or D²u) with the assembled modulus bound.

    Gradient mode assembles ‖Du‖_{L¹}t^β + (‖Du‖_{L¹} + ∫ω̂_g/t)ω*_A(t) + ω*_g(t);
    hessian mode ‖D²u‖_{L¹}t^β + [u]₂ω*_A(t) + ω*_f(t). A single constant is
    fitted as the COVERAGE quantile of lhs/rhs over log-stratified pairs in
    B⁺(center, radius/2).
    """
    if beta is None:
        beta = choose_beta(C0, kappa, p) if C0 is not None and np.isfinite(C0) else 0.5
    _, star_A = _hat_star(omega_A, kappa, beta)
    hat_d, star_d = _hat_star(omega_data, kappa, beta)
    grid = u.grid
    region_mask = grid.ball_mask(center, radius)
    inner_mask = grid.ball_mask(center, 0.5 * radius)
    cell = grid.cell_area

    h = max(grid.h)
    lo = d_min if d_min is not None else h / 64.0

    if mode == "gradient":
        D = u.gradient.values
        mag = np.linalg.norm(D, axis=-1)
        l1 = float(np.nansum(mag[region_mask]) * cell)
        hat_int = 0.0
        if not hat_d.is_zero():
            est = dini_integral(hat_d, upper=0.25)
            if est.divergent:
                # truncate at the smallest sampled distance
                est = dini_integral(hat_d, lower=lo, upper=0.25)
            hat_int = float(est.value)
        coef_A = l1 + hat_int
        norms = {"l1": l1, "hat_integral": hat_int}
    else:
        D = u.hessian.values
        mag = np.sqrt(np.nansum(D**2, axis=(-2, -1)))
        l1 = float(np.nansum(mag[region_mask]) * cell)
        semi = float(np.nanmax(np.where(region_mask, mag, np.nan)))
        coef_A = semi
        norms = {"l1": l1, "seminorm": semi}

    rhs_mod = SumModulus([PowerModulus(beta, l1), coef_A * star_A, star_d])
    checked = classify(omega_A).is_dini and classify(omega_data).is_dini
    if not checked:
        logger.warning("Input moduli are not Dini; skipping the vanishing-limit check")

    def region(points: np.ndarray) -> np.ndarray:
        rel = points - np.asarray(center, dtype=float)
        return (np.hypot(rel[:, 0], rel[:, 1]) < 0.5 * radius) & (rel[:, 1] >= 0)

    x, y = _sample_pairs(grid, inner_mask, lo, 0.5 * radius, pairs, seed, region)
    dx = u.gradient_at(x) if mode == "gradient" else u.hessian_at(x)
    dy = u.gradient_at(y) if mode == "gradient" else u.hessian_at(y)
    axes = (1,) if mode == "gradient" else (1, 2)
    lhs = np.sqrt(np.sum((dx - dy) ** 2, axis=axes))
    finite = np.isfinite(lhs)
    x, y, lhs = x[finite], y[finite], lhs[finite]
    dist = np.linalg.norm(x - y, axis=1)
    rhs = rhs_mod(dist)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 1e-12, np.inf, 0.0))
    C_fit = float(np.quantile(ratio, COVERAGE, method="higher")) if ratio.size else 0.0
    covered = np.isinf(rhs) | (lhs <= C_fit * np.where(np.isinf(rhs), 0.0, rhs) + 1e-15)
    coverage = float(np.mean(covered)) if ratio.size else 1.0
    r_lo, r_hi = rhs_mod(lo), rhs_mod(0.5 * radius)
    vanishing = float(r_lo / r_hi) if np.isfinite(r_hi) and r_hi > 0 else np.nan
    return BoundAssembly(
        mode=mode,
        beta=float(beta),
        distances=dist,
        lhs=lhs,
        rhs=rhs,
        C_fit=C_fit,
        coverage=coverage,
        vanishing_ratio=vanishing,
        vanishing_checked=checked,
        norms=norms,
        rhs_modulus=rhs_mod,
        C_max=C_max,
    )


# Global C² pipeline --------------------------------------------------------


@dataclass
class C2Report:
    """Smallness closure and the global [u]₂ bound against the measured value."""

    s0: Optional[float]
    C: float
    bound: Optional[float]
    measured: float
    inconclusive: bool
    theta_at_s0: Optional[float]
    calibration: List[Dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.inconclusive or self.bound is None:
            return False
        return bool(np.isfinite(self.bound) and self.bound >= self.measured)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s0": self.s0,
            "C": self.C,
            "bound": self.bound,
            "measured": self.measured,
            "inconclusive": self.inconclusive,
            "theta_at_s0": self.theta_at_s0,
            "passed": self.passed,
        }


def sample_half_ball(
    func: PointFunction,
    radius: float,
    n: int = 64,
    center: Sequence[float] = (0.0, 0.0),
) -> ScalarField:
    """Sample a point function on the node grid of B⁺(center, radius)."""
    cx, cy = center

    def inside(p: np.ndarray) -> np.ndarray:
        return (p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2 <= radius**2 * (1 + 1e-12)

    grid = Grid2D.uniform(
        (cx - radius, cx + radius, cy, cy + radius), (2 * n + 1, n + 1), region=inside
    )
    values = np.full(grid.shape, np.nan)
    values[grid.mask] = func(grid.active_points())
    return ScalarField(grid, values)


def interior_calibration(
    u: ScalarField,
    omega_f_tilde: Modulus,
    radius: float,
    center: Sequence[float] = (0.0, 0.0),
    lattice: int = 4,
) -> Tuple[float, List[Dict[str, float]]]:
    """Interior calibration constant.

    max over interior balls of
    ‖D²u‖_{L∞(B(x,r))} / (r^{-2}‖D²u‖_{L¹(B(x,2r))} + ∫₀^r ω̃_f/t dt).
    """
    H = u.hessian().values
    mag = np.sqrt(np.nansum(H**2, axis=(-2, -1)))
    mag = np.where(np.isfinite(mag) & u.grid.mask, mag, np.nan)
    cx, cy = center
    r = radius / (2.0 * lattice)
    rows: List[Dict[str, float]] = []
    best = 0.0
    for i in range(-lattice + 1, lattice):
        for j in range(1, lattice):
            x = np.array([cx + i * 2 * r, cy + j * 2 * r])
            if np.hypot(*(x - center)) + 2 * r > radius or x[1] - 2 * r < cy:
                continue
            inner = u.grid.ball_mask(x, r)
            outer = u.grid.ball_mask(x, 2 * r)
            sup = float(np.nanmax(mag[inner])) if inner.any() else 0.0
            l1 = float(np.nansum(mag[outer]) * u.grid.cell_area)
            tail = 0.0
            if not omega_f_tilde.is_zero():
                upper = min(r, omega_f_tilde.a)
                tail = float(dini_integral(omega_f_tilde, upper=upper).value)
            den = l1 / r**2 + tail
            ratio = sup / den if den > 0 else 0.0
            rows.append({"x": float(x[0]), "y": float(x[1]), "r": r, "ratio": ratio})
            best = max(best, ratio)
    return best, rows


def c2_global_pipeline(
    u: FieldLike,
    radius: float,
    omega_A: Optional[Modulus] = None,
    omega_f: Optional[Modulus] = None,
    theta: Optional[Modulus] = None,
    omega_b: Optional[Modulus] = None,
    omega_c: Optional[Modulus] = None,
    b_sup: float = 0.0,
    c_sup: float = 0.0,
    mu: float = 0.5,
    kappa: float = 0.25,
    beta: float = 0.5,
    a: float = 1.0,
    C: Optional[float] = None,
    center: Sequence[float] = (0.0, 0.0),
) -> C2Report:
    """ϑ₀, ϑ₁ and the smallness closure behind the global [u]₂ bound.

    ϑ₀(t) = ω_A(at) + ϑ(at), ϑ₁(t) = ω_b(t) + ω_c(t) + (‖b‖ + ‖c‖)t^μ. s₀ is
    the largest scale with C∫₀^{s₀}(ϑ̂₀ + ϑ̂₁)/t dt ≤ 1/2, and then
    [u]₂ ≤ 2C(s₀^{-2}‖D²u‖_{L¹(B⁺_{4s₀})} + ∫₀^{s₀}ω̂_f/t dt + ‖u‖_{L¹}∫₀^{s₀}ϑ̂₁/t dt).
    """
    f = _scalar_field(u)
    zero = ZeroModulus()
    omega_A = omega_A or zero
    omega_f = omega_f or zero
    theta = theta or zero
    theta0 = SumModulus([omega_A.dilate(a), theta.dilate(a)])
    pieces: List[Modulus] = [omega_b or zero, omega_c or zero]
    if b_sup + c_sup > 0:
        pieces.append(PowerModulus(mu, b_sup + c_sup))
    theta1 = SumModulus(pieces)

    def hat(m: Modulus) -> Modulus:
        return zero if m.is_zero() else transform_chain(m, kappa, beta).hat

    def log_integral(m: Modulus, upper: float) -> float:
        if m.is_zero():
            return 0.0
        return float(dini_integral(m, upper=min(upper, m.a)).value)

    hat0, hat1, hat_f = hat(theta0), hat(theta1), hat(omega_f)
    tilde_f = zero if omega_f.is_zero() else transform_chain(omega_f, kappa, beta).tilde

    if C is None:
        C, rows = interior_calibration(f, tilde_f, radius, center)
    else:
        rows = []
    C = max(float(C), 1.0)

    H = f.hessian().values
    mag = np.sqrt(np.nansum(H**2, axis=(-2, -1)))
    mag = np.where(f.grid.mask & np.isfinite(mag), mag, np.nan)
    measured = float(np.nanmax(mag))

    s0: Optional[float] = None
    theta_s0: Optional[float] = None
    for s in np.geomspace(radius / 4.0, radius * 1e-4, 40):
        value = C * (log_integral(hat0, s) + log_integral(hat1, s))
        if value <= 0.5:
            s0, theta_s0 = float(s), float(value)
            break
    if s0 is None:
        logger.warning(
            "No s₀ closes the smallness condition at this scale; inconclusive"
        )
        return C2Report(None, C, None, measured, True, None, rows)

    ball = f.grid.ball_mask(center, min(4 * s0, radius))
    l1_d2 = float(np.nansum(mag[ball]) * f.grid.cell_area)
    u_l1 = float(np.nansum(np.abs(f.values[f.grid.mask])) * f.grid.cell_area)
    bound = 2.0 * C * (
        l1_d2 / s0**2 + log_integral(hat_f, s0) + u_l1 * log_integral(hat1, s0)
    )
    logger.info(
        f"Global [u]₂ bound {bound:.4g} vs measured {measured:.4g} (s₀ = {s0:.3g})"
    )
    return C2Report(s0, C, bound, measured, False, theta_s0, rows)
