"""Moduli of continuity and their Dini calculus.

A modulus is a nondecreasing function ω on [0, a] with ω(0) = 0. Every
modulus here can be evaluated two ways:

* ``ω(t)``: vectorized over ``t``, held constant beyond the right end ``a``;
* ``ω.at_log(s)``: the value ω(e^{-s}), which stays accurate deep in the
  ``t → 0`` regime where ``e^{-s}`` underflows. All quadrature runs in
  ``s = ln(1/t)``.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from typing_extensions import Literal

from .exceptions import InvalidModulusError, ParameterError
from .store import csv_table

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Divergence detection over shells dyadic in s = ln(1/t).
DIVERGENCE_FLOOR = 1e-4
DIVERGENCE_RUN = 40
MAX_SHELLS = 64
TAIL_TOLERANCE = 1e-12

# Sup evaluation for closed forms.
SUP_GRID_POINTS = 400
SUP_WINDOW = 40.0


class Modulus(ABC):
    """A nondecreasing function ω: [0, a] → [0, ∞) with ω(0) = 0."""

    kind: str = "abstract"

    def __init__(self, a: float = 1.0) -> None:
        if not a > 0:
            raise InvalidModulusError(f"Domain right end must be positive, got {a}")
        self.a = float(a)

    @property
    def s_min(self) -> float:
        """Smallest log-coordinate inside the domain, ln(1/a)."""
        return -np.log(self.a) if np.isfinite(self.a) else -np.inf

    def __call__(self, t: ArrayLike) -> Any:
        arr = np.asarray(t, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise InvalidModulusError("Modulus arguments must be nonnegative")

        out = np.zeros_like(arr)
        pos = arr > 0
        if pos.any():
            clipped = np.minimum(arr[pos], self.a)
            out[pos] = self.at_log(-np.log(clipped))
        return float(out[0]) if scalar else out

    @abstractmethod
    def at_log(self, s: np.ndarray) -> np.ndarray:
        """Return ω(e^{-s}) for an array of log-coordinates."""
        raise NotImplementedError

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    # Arithmetic ---------------------------------------------------------

    def __add__(self, other: "Modulus") -> "Modulus":
        if not isinstance(other, Modulus):
            return NotImplemented
        return SumModulus([self, other])

    def __rmul__(self, factor: float) -> "Modulus":
        return ScaledModulus(self, float(factor))

    def dilate(self, c: float) -> "Modulus":
        return DilatedModulus(self, c)

    def sample(
        self, n: int = 200, t_min: float = 1e-8
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Log-spaced samples (t, ω(t)) on [t_min·a, a]."""
        right = self.a if np.isfinite(self.a) else 1.0
        t = np.geomspace(t_min * right, right, n)
        return t, self(t)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


def _check_log_values(values: np.ndarray, name: str) -> np.ndarray:
    if np.any(values < 0):
        raise InvalidModulusError(f"{name} produced negative values")
    return values


class ZeroModulus(Modulus):
    """The identically zero modulus."""

    kind = "zero"

    def at_log(self, s: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(s, dtype=float))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a}

    def is_zero(self) -> bool:
        return True


class PowerModulus(Modulus):
    """ω(t) = coef · t^α."""

    kind = "power"

    def __init__(self, alpha: float, coef: float = 1.0, a: float = 1.0) -> None:
        super().__init__(a)
        if not alpha > 0:
            raise InvalidModulusError(f"Power exponent must be positive, got {alpha}")
        if coef < 0:
            raise InvalidModulusError(f"Coefficient must be nonnegative, got {coef}")
        self.alpha = float(alpha)
        self.coef = float(coef)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        return self.coef * np.exp(-self.alpha * np.asarray(s, dtype=float))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alpha": self.alpha, "coef": self.coef, "a": self.a}

    def is_zero(self) -> bool:
        return self.coef == 0.0


class LogPowerModulus(Modulus):
    """ω(t) = coef · (ln(e/t))^{-γ}, defined for t ≤ a ≤ e."""

    kind = "logpower"

    def __init__(self, gamma: float, coef: float = 1.0, a: float = 1.0) -> None:
        super().__init__(a)
        if not gamma > 0:
            raise InvalidModulusError(f"Log exponent must be positive, got {gamma}")
        if a > np.e:
            raise InvalidModulusError("Log-power modulus requires a ≤ e")
        self.gamma = float(gamma)
        self.coef = float(coef)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        return self.coef * (1.0 + np.asarray(s, dtype=float)) ** (-self.gamma)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "gamma": self.gamma, "coef": self.coef, "a": self.a}

    def is_zero(self) -> bool:
        return self.coef == 0.0


class TableModulus(Modulus):
    """Monotone sample table (tᵢ, ωᵢ) with linear interpolation.

    ``raw`` keeps the values a table was derived from (for instance a
    non-monotone empirical mean oscillation) before the running max.
    """

    kind = "table"

    def __init__(
        self,
        t: Sequence[float],
        w: Sequence[float],
        raw: Optional[Sequence[float]] = None,
    ) -> None:
        t_arr = np.asarray(t, dtype=float)
        w_arr = np.asarray(w, dtype=float)
        if t_arr.ndim != 1 or t_arr.shape != w_arr.shape or t_arr.size == 0:
            raise InvalidModulusError("Table needs matching one-dimensional t and w")
        if np.any(~np.isfinite(t_arr)) or np.any(~np.isfinite(w_arr)):
            raise InvalidModulusError("Table entries must be finite")
        if np.any(np.diff(t_arr) <= 0):
            raise InvalidModulusError("Table abscissae must be strictly increasing")
        if t_arr[0] < 0 or np.any(w_arr < 0):
            raise InvalidModulusError("Table entries must be nonnegative")
        if np.any(np.diff(w_arr) < 0):
            raise InvalidModulusError("Table values must be nondecreasing")
        if t_arr[0] == 0.0:
            if w_arr[0] != 0.0:
                raise InvalidModulusError("Table must satisfy ω(0) = 0")
        else:
            t_arr = np.concatenate([[0.0], t_arr])
            w_arr = np.concatenate([[0.0], w_arr])

        super().__init__(float(t_arr[-1]))
        self.t = t_arr
        self.w = w_arr
        self.raw = None if raw is None else np.asarray(raw, dtype=float)

    @classmethod
    def from_running_max(
        cls, t: Sequence[float], raw: Sequence[float]
    ) -> "TableModulus":
        """Monotone envelope of a raw (possibly non-monotone) table."""
        raw_arr = np.clip(np.asarray(raw, dtype=float), 0.0, None)
        return cls(t, np.maximum.accumulate(raw_arr), raw=raw_arr)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.t[1:]

    def at_log(self, s: np.ndarray) -> np.ndarray:
        return np.interp(np.exp(-np.asarray(s, dtype=float)), self.t, self.w)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "t": self.t.tolist(), "w": self.w.tolist()}

    def is_zero(self) -> bool:
        return bool(np.all(self.w == 0))


class CallableModulus(Modulus):
    """A modulus given by an arbitrary vectorized callable t ↦ ω(t)."""

    kind = "callable"

    def __init__(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        a: float = 1.0,
        name: str = "",
    ) -> None:
        super().__init__(a)
        self.func = func
        self.name = name or getattr(func, "__name__", "callable")

    def at_log(self, s: np.ndarray) -> np.ndarray:
        t = np.exp(-np.asarray(s, dtype=float))
        return _check_log_values(np.asarray(self.func(t), dtype=float), self.name)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "name": self.name, "a": self.a}


# Composite moduli ---------------------------------------------------------


class SumModulus(Modulus):
    """Pointwise sum of moduli."""

    kind = "sum"

    def __init__(self, terms: Sequence[Modulus]) -> None:
        flat: List[Modulus] = []
        for term in terms:
            if isinstance(term, SumModulus):
                flat.extend(term.terms)
            elif not term.is_zero():
                flat.append(term)
        super().__init__(min((m.a for m in terms), default=1.0))
        self.terms = flat

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        total = np.zeros_like(s)
        for term in self.terms:
            total = total + term.at_log(np.maximum(s, term.s_min))
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "terms": [m.to_dict() for m in self.terms]}

    def is_zero(self) -> bool:
        return not self.terms


class ScaledModulus(Modulus):
    """t ↦ factor · ω(t)."""

    kind = "scaled"

    def __init__(self, base: Modulus, factor: float) -> None:
        if factor < 0:
            raise InvalidModulusError("Scale factor must be nonnegative")
        super().__init__(base.a)
        self.base = base
        self.factor = float(factor)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        return self.factor * self.base.at_log(s)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "factor": self.factor, "base": self.base.to_dict()}

    def is_zero(self) -> bool:
        return self.factor == 0.0 or self.base.is_zero()


class DilatedModulus(Modulus):
    """t ↦ ω(c·t), clamped at the base right end."""

    kind = "dilated"

    def __init__(self, base: Modulus, c: float) -> None:
        if not c > 0:
            raise ParameterError(f"Dilation factor must be positive, got {c}")
        super().__init__(base.a / c)
        self.base = base
        self.c = float(c)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        shifted = np.asarray(s, dtype=float) - np.log(self.c)
        return self.base.at_log(np.maximum(shifted, self.base.s_min))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "c": self.c, "base": self.base.to_dict()}

    def is_zero(self) -> bool:
        return self.base.is_zero()


class ClampedModulus(Modulus):
    """t ↦ ω(min(t, right_end)), extended constantly to ``a``."""

    kind = "clamped"

    def __init__(
        self, base: Modulus, right_end: float, a: Optional[float] = None
    ) -> None:
        super().__init__(a if a is not None else max(base.a, right_end))
        self.base = base
        self.right_end = float(right_end)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s_floor = -np.log(self.right_end)
        return self.base.at_log(np.maximum(np.asarray(s, dtype=float), s_floor))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "right_end": self.right_end,
            "base": self.base.to_dict(),
        }

    def is_zero(self) -> bool:
        return self.base.is_zero()


class ProductModulus(Modulus):
    """Pointwise product of moduli, e.g. t^α (ln(e/t))^{-γ}."""

    kind = "product"

    def __init__(self, factors: Sequence[Modulus]) -> None:
        if not factors:
            raise InvalidModulusError("Product needs at least one factor")
        super().__init__(min(m.a for m in factors))
        self.factors = list(factors)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        for factor in self.factors:
            out = out * factor.at_log(np.maximum(s, factor.s_min))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "factors": [m.to_dict() for m in self.factors]}

    def is_zero(self) -> bool:
        return any(m.is_zero() for m in self.factors)


class IntegralModulus(Modulus):
    """t ↦ ∫₀ᵗ ω(s)/s ds.

    Scalar evaluations are exact shell quadratures; array evaluations use a
    monotone PCHIP table in log-coordinates built on first use.
    """

    kind = "integral"
    TABLE_STEP = 1.0 / 16.0
    TABLE_SPAN = 64.0

    def __init__(self, base: Modulus, a: Optional[float] = None) -> None:
        right = a if a is not None else (base.a if np.isfinite(base.a) else 1.0)
        super().__init__(right)
        self.base = base
        self._table: Optional[Tuple[float, float, Optional[PchipInterpolator]]] = None

    def _tail(self, s: float) -> float:
        estimate = _log_tail_integral(self.base.at_log, s)
        return np.inf if estimate.divergent else estimate.value

    def _build_table(self) -> Tuple[float, float, Optional[PchipInterpolator]]:
        lo = self.s_min
        step = self.TABLE_STEP
        nodes = lo + np.arange(0.0, self.TABLE_SPAN + step / 2, step)
        end_tail = self._tail(float(nodes[-1]))
        if not np.isfinite(end_tail):
            return lo, float(nodes[-1]), None
        values = np.empty_like(nodes)
        values[-1] = end_tail
        f = _scalar(self.base.at_log)
        for j in range(nodes.size - 2, -1, -1):
            piece, _ = integrate.quad(
                f, nodes[j], nodes[j + 1], epsabs=1e-15, epsrel=1e-12, limit=100
            )
            values[j] = values[j + 1] + piece
        return lo, float(nodes[-1]), PchipInterpolator(nodes, values)

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s = np.maximum(np.asarray(s, dtype=float), self.s_min)
        if s.size <= 4:
            return np.array([self._tail(float(v)) for v in s.ravel()]).reshape(s.shape)
        if self._table is None:
            self._table = self._build_table()
        lo, hi, spline = self._table
        if spline is None:
            return np.full_like(s, np.inf)
        out = np.empty_like(s)
        inside = s <= hi
        out[inside] = spline(s[inside])
        for idx in np.flatnonzero(~inside.ravel()):
            out.flat[idx] = self._tail(float(s.flat[idx]))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "base": self.base.to_dict(), "a": self.a}

    def is_zero(self) -> bool:
        return self.base.is_zero()


class MajorantModulus(Modulus):
    """ω̃(t) = sup_{s∈[t,a]} (t/s)^β ω(s).

    For table bases the sup is exact over the breakpoints; otherwise it is a
    log-grid search refined by bounded scalar minimization.
    """

    kind = "majorant"

    def __init__(
        self,
        base: Modulus,
        beta: float,
        right_end: Optional[float] = None,
        extra_log_points: Optional[Callable[[float, float], np.ndarray]] = None,
    ) -> None:
        end = right_end if right_end is not None else base.a
        if not np.isfinite(end):
            raise ParameterError("Majorant needs a finite right end")
        super().__init__(end)
        self.base = base
        self.beta = float(beta)
        self._extra = extra_log_points

    def _sup_at(self, s: float) -> float:
        lo = self.s_min
        if s <= lo:
            return float(self.base.at_log(np.array([lo]))[0])
        beta = self.beta

        if isinstance(self.base, TableModulus):
            t = np.exp(-s)
            cand = self.base.breakpoints
            cand = np.concatenate([[t, self.a], cand[(cand >= t) & (cand <= self.a)]])
            return float(np.max((t / cand) ** beta * self.base(cand)))

        window_lo = max(lo, s - SUP_WINDOW / beta)
        sigma = np.linspace(window_lo, s, SUP_GRID_POINTS)
        sigma = np.concatenate([sigma, [lo] if lo > -np.inf else []])
        if self._extra is not None:
            extra = self._extra(window_lo, s)
            sigma = np.concatenate([sigma, extra[(extra >= window_lo) & (extra <= s)]])

        def weighted(sig: np.ndarray) -> np.ndarray:
            sig = np.asarray(sig, dtype=float)
            return np.exp(-beta * (s - sig)) * self.base.at_log(sig)

        vals = weighted(sigma)
        best = int(np.argmax(vals))
        best_val = float(vals[best])
        order = np.argsort(sigma)
        srt = sigma[order]
        pos = int(np.searchsorted(srt, sigma[best]))
        left = srt[max(pos - 1, 0)]
        right = srt[min(pos + 1, srt.size - 1)]
        if right > left:
            res = optimize.minimize_scalar(
                lambda v: -float(weighted(np.array([v]))[0]),
                bounds=(left, right),
                method="bounded",
                options={"xatol": 1e-12},
            )
            if res.success and -res.fun > best_val:
                best_val = float(-res.fun)
        return best_val

    def at_log(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.array([self._sup_at(float(v)) for v in s.ravel()]).reshape(s.shape)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "a": self.a,
            "base": self.base.to_dict(),
        }

    def is_zero(self) -> bool:
        return self.base.is_zero()


# Serialization ------------------------------------------------------------


def modulus_from_dict(data: Dict[str, Any]) -> Modulus:
    """Rebuild a modulus from its ``to_dict`` form."""
    kind = data.get("kind")
    a = float(data.get("a", 1.0))
    if kind == "zero":
        return ZeroModulus(a)
    if kind == "power":
        return PowerModulus(data["alpha"], data.get("coef", 1.0), a)
    if kind == "logpower":
        return LogPowerModulus(data["gamma"], data.get("coef", 1.0), a)
    if kind == "table":
        return TableModulus(data["t"], data["w"])
    if kind == "sum":
        return SumModulus([modulus_from_dict(d) for d in data["terms"]])
    if kind == "scaled":
        return ScaledModulus(modulus_from_dict(data["base"]), data["factor"])
    if kind == "dilated":
        return DilatedModulus(modulus_from_dict(data["base"]), data["c"])
    if kind == "clamped":
        return ClampedModulus(modulus_from_dict(data["base"]), data["right_end"])
    if kind == "product":
        return ProductModulus([modulus_from_dict(d) for d in data["factors"]])
    if kind == "integral":
        return IntegralModulus(modulus_from_dict(data["base"]), a)
    if kind == "majorant":
        return MajorantModulus(modulus_from_dict(data["base"]), data["beta"], a)
    raise InvalidModulusError(f"Unknown modulus kind: {kind!r}")


# Dini integrals -----------------------------------------------------------


@dataclass(frozen=True)
class IntegralEstimate:
    """Quadrature estimate of a Dini-type integral."""

    value: float
    error: float
    divergent: bool
    shells: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": None if self.divergent else self.value,
            "error": self.error,
            "divergent": self.divergent,
            "shells": self.shells,
        }


def _scalar(func: Callable[[np.ndarray], np.ndarray]) -> Callable[[float], float]:
    def wrapped(x: float) -> float:
        return float(func(np.array([x]))[0])

    return wrapped


def _quad_panels(
    f: Callable[[float], float], lo: float, hi: float, panels: int
) -> Tuple[float, float]:
    edges = np.linspace(lo, hi, panels + 1)
    total = 0.0
    err = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f, left, right, epsabs=1e-15, epsrel=1e-12, limit=200)
        total += val
        err += e
    return total, err


def _log_tail_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    s0: float,
    refine: int = 0,
) -> IntegralEstimate:
    """∫_{s0}^∞ integrand(s) ds over shells [s0+2^k−1, s0+2^{k+1}−1]."""
    f = _scalar(integrand)
    total = 0.0
    err = 0.0
    run = 0
    previous: Optional[float] = None
    panels = 2 ** refine

    for k in range(MAX_SHELLS):
        lo = s0 + 2.0**k - 1.0
        hi = s0 + 2.0 ** (k + 1) - 1.0
        piece, piece_err = _quad_panels(f, lo, hi, panels)
        total += piece
        err += piece_err

        run = run + 1 if piece > DIVERGENCE_FLOOR else 0
        if run >= DIVERGENCE_RUN:
            return IntegralEstimate(np.inf, np.inf, True, k + 1)

        if piece <= 0.0:
            return IntegralEstimate(total, err, False, k + 1)
        if previous is not None and previous > 0.0:
            ratio = piece / previous
            if ratio < 1.0:
                tail = piece * ratio / (1.0 - ratio)
                if tail < TAIL_TOLERANCE * max(1.0, abs(total)):
                    err += tail
                    total += tail
                    return IntegralEstimate(total, err, False, k + 1)
        previous = piece

    return IntegralEstimate(np.inf, np.inf, True, MAX_SHELLS)


def _finalize(estimate: IntegralEstimate) -> IntegralEstimate:
    if estimate.divergent:
        return estimate
    floor = 64.0 * np.finfo(float).eps * max(abs(estimate.value), 1e-300)
    return IntegralEstimate(
        estimate.value, max(estimate.error, floor), False, estimate.shells
    )


def _weighted_integral(
    omega: Modulus,
    lower: float,
    upper: Optional[float],
    weight: Callable[[np.ndarray], np.ndarray],
    refine: int,
) -> IntegralEstimate:
    right = omega.a if upper is None else float(upper)
    if right > omega.a * (1 + 1e-12) and np.isfinite(omega.a):
        raise ParameterError(
            f"Upper limit {right} exceeds the domain right end {omega.a}"
        )
    if lower < 0 or not lower < right:
        raise ParameterError(f"Need 0 ≤ lower < upper, got [{lower}, {right}]")

    s_hi_t = -np.log(right)

    def integrand(s: np.ndarray) -> np.ndarray:
        return omega.at_log(s) * weight(s)

    if lower > 0:
        s_lo_t = -np.log(lower)
        span = s_lo_t - s_hi_t
        panels = max(1, int(np.ceil(np.log2(1.0 + span)))) * 2 ** refine
        value, err = _quad_panels(_scalar(integrand), s_hi_t, s_lo_t, panels)
        return _finalize(IntegralEstimate(value, err, False, panels))

    return _finalize(_log_tail_integral(integrand, s_hi_t, refine))


def dini_integral(
    omega: Modulus,
    lower: float = 0.0,
    upper: Optional[float] = None,
    refine: int = 0,
) -> IntegralEstimate:
    """Estimate ∫_{lower}^{upper} ω(t)/t dt via the substitution t = e^{-s}.

    Args:
        omega: The modulus to integrate.
        lower: Lower limit (0 for the Dini integral proper).
        upper: Upper limit, defaults to the domain right end.
        refine: Split every shell into 2**refine panels.

    Returns:
        An IntegralEstimate; ``divergent`` is set when the shell contributions
        fail the Cauchy criterion.
    """
    return _weighted_integral(omega, lower, upper, lambda s: np.ones_like(s), refine)


def double_dini_integral(
    omega: Modulus,
    lower: float = 0.0,
    upper: Optional[float] = None,
    refine: int = 0,
) -> IntegralEstimate:
    """Estimate ∫ ω(t) ln(1/t)/t dt over (lower, upper] with upper ≤ 1."""
    right = min(omega.a, 1.0) if upper is None else upper
    if right > 1.0:
        raise ParameterError("The double Dini weight needs upper ≤ 1")
    return _weighted_integral(
        omega, lower, right, lambda s: np.asarray(s, dtype=float), refine
    )


@dataclass(frozen=True)
class DiniReport:
    """Outcome of classifying a modulus by its Dini integrals."""

    dini_integral_estimate: float
    double_dini_integral_estimate: float
    classification: Literal["neither", "dini", "double_dini"]
    quadrature_error_estimate: float

    @property
    def is_dini(self) -> bool:
        return self.classification != "neither"

    @property
    def is_double_dini(self) -> bool:
        return self.classification == "double_dini"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dini_integral_estimate": self.dini_integral_estimate,
            "double_dini_integral_estimate": self.double_dini_integral_estimate,
            "classification": self.classification,
            "quadrature_error_estimate": self.quadrature_error_estimate,
        }


def classify(omega: Modulus) -> DiniReport:
    """Classify ω as neither, Dini, or double Dini; divergence flags dominate."""
    upper = min(omega.a, 1.0) if np.isfinite(omega.a) else 1.0
    single = dini_integral(omega, 0.0, upper)
    double = double_dini_integral(omega, 0.0, upper)

    if single.divergent:
        label: Literal["neither", "dini", "double_dini"] = "neither"
    elif double.divergent:
        label = "dini"
    else:
        label = "double_dini"

    errors = [e.error for e in (single, double) if not e.divergent]
    logger.debug(f"Classified {omega!r} as {label}")
    return DiniReport(
        dini_integral_estimate=single.value,
        double_dini_integral_estimate=double.value,
        classification=label,
        quadrature_error_estimate=max(errors) if errors else np.inf,
    )


def check_doubling(
    omega: Modulus, n: int = 200, subdivisions: int = 9
) -> Tuple[float, float]:
    """Empirical doubling constants (c₁, c₂) with c₁ω(t) ≤ ω(s) ≤ c₂ω(t), s ∈ [t/2, t].

    Each sample t is compared against ``subdivisions`` evenly spaced s in
    [t/2, t]; non-monotone moduli can give c₂ > 1.
    """
    t, w = omega.sample(n)
    pos = w > 0
    if not pos.any():
        return 1.0, 1.0
    s = np.outer(t[pos], np.linspace(0.5, 1.0, subdivisions))
    ratio = omega(s.ravel()).reshape(s.shape) / w[pos, None]
    return float(ratio.min()), float(ratio.max())


def majorant_beta(omega: Modulus, beta: float) -> MajorantModulus:
    """The smallest majorant ω̃ ≥ ω with t^{-β}ω̃(t) nonincreasing."""
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")
    if not np.isfinite(omega.a):
        raise ParameterError("majorant_beta needs a modulus with finite domain")
    c1, _ = check_doubling(omega)
    if c1 <= 0.0:
        raise InvalidModulusError("Modulus fails the doubling condition")
    return MajorantModulus(omega, beta)


# CSV export ---------------------------------------------------------------


def modulus_table_csv(
    radii: Sequence[float],
    values: Sequence[float],
    errors: Optional[Sequence[float]] = None,
) -> str:
    """Render (r, value, error_estimate) rows as CSV text."""
    err = errors if errors is not None else np.zeros(len(radii))
    return csv_table(["r", "value", "error_estimate"], [radii, values, err])
