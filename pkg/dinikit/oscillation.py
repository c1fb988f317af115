"""Empirical moduli measured from grid samples."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ResolutionError
from .fields import ScalarField
from .modulus import TableModulus, modulus_table_csv

logger = logging.getLogger(__name__)

MIN_CELLS_PER_RADIUS = 4
CHUNK_ELEMENTS = 2_000_000


def _region_mask(
    f: ScalarField, region: Optional[Callable[[np.ndarray], np.ndarray]]
) -> np.ndarray:
    mask = f.grid.mask & np.isfinite(f.values)
    if region is not None:
        inside = np.asarray(region(f.grid.points()), dtype=bool).reshape(f.grid.shape)
        mask = mask & inside
    return mask


def _check_radii(f: ScalarField, radii: Sequence[float]) -> np.ndarray:
    r = np.asarray(sorted(radii), dtype=float)
    if r.size == 0 or np.any(r <= 0):
        raise ResolutionError("Radii must be positive")
    h = max(f.grid.h)
    if r[0] < MIN_CELLS_PER_RADIUS * h:
        raise ResolutionError(
            f"Radius {r[0]:.3g} is below {MIN_CELLS_PER_RADIUS} grid cells (h={h:.3g})"
        )
    return r


def _disk_offsets(radius: float, hx: float, hy: float) -> np.ndarray:
    ni = int(np.floor(radius / hx))
    nj = int(np.floor(radius / hy))
    di, dj = np.meshgrid(np.arange(-ni, ni + 1), np.arange(-nj, nj + 1), indexing="xy")
    keep = (di * hx) ** 2 + (dj * hy) ** 2 <= radius**2 * (1 + 1e-12)
    return np.column_stack([dj[keep], di[keep]])


def _ball_mean_oscillation(
    values: np.ndarray,
    mask: np.ndarray,
    offsets: np.ndarray,
    stride: int,
) -> float:
    ny, nx = values.shape
    pad_j = int(np.abs(offsets[:, 0]).max())
    pad_i = int(np.abs(offsets[:, 1]).max())
    vpad = np.pad(np.where(mask, values, 0.0), ((pad_j, pad_j), (pad_i, pad_i)))
    mpad = np.pad(mask, ((pad_j, pad_j), (pad_i, pad_i)))

    cj, ci = np.nonzero(mask)
    if stride > 1:
        keep = (cj % stride == 0) & (ci % stride == 0)
        cj, ci = cj[keep], ci[keep]
    if cj.size == 0:
        return 0.0

    best = 0.0
    chunk = max(1, CHUNK_ELEMENTS // offsets.shape[0])
    for start in range(0, cj.size, chunk):
        jj = cj[start : start + chunk, None] + pad_j + offsets[None, :, 0]
        ii = ci[start : start + chunk, None] + pad_i + offsets[None, :, 1]
        vals = vpad[jj, ii]
        w = mpad[jj, ii]
        count = w.sum(axis=1)
        mean = (vals * w).sum(axis=1) / count
        osc = (np.abs(vals - mean[:, None]) * w).sum(axis=1) / count
        best = max(best, float(osc.max()))
    return best


def empirical_mean_oscillation(
    f: ScalarField,
    radii: Sequence[float],
    region: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    stride: int = 1,
) -> TableModulus:
    """ω_f(r) = sup_x ⨍_{Ω(x,r)} |f − f̄| over the node lattice.

    Balls are clipped to the sampled domain. The raw sup table is kept on the
    returned modulus as ``raw``; its running max is the modulus itself.
    """
    r = _check_radii(f, radii)
    mask = _region_mask(f, region)
    hx, hy = f.grid.h
    raw = [
        _ball_mean_oscillation(f.values, mask, _disk_offsets(radius, hx, hy), stride)
        for radius in r
    ]
    logger.debug(f"Mean oscillation over {len(r)} radii: {raw}")
    return TableModulus.from_running_max(r, raw)


def empirical_continuity_modulus(
    f: ScalarField,
    radii: Sequence[float],
    region: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> TableModulus:
    """ϱ_f(t) = sup{|f(x) − f(y)| : |x − y| ≤ t} over sampled node pairs."""
    r = _check_radii(f, radii)
    mask = _region_mask(f, region)
    hx, hy = f.grid.h
    vals = np.where(mask, f.values, np.nan)
    ny, nx = vals.shape

    offsets = _disk_offsets(float(r[-1]), hx, hy)
    # Half plane of offsets suffices by symmetry.
    half = (offsets[:, 0] > 0) | ((offsets[:, 0] == 0) & (offsets[:, 1] > 0))
    offsets = offsets[half]
    dist = np.hypot(offsets[:, 0] * hy, offsets[:, 1] * hx)

    per_offset = np.zeros(offsets.shape[0])
    for k, (dj, di) in enumerate(offsets):
        a = vals[max(0, -dj) : ny - max(0, dj), max(0, -di) : nx - max(0, di)]
        b = vals[max(0, dj) : ny + min(0, dj), max(0, di) : nx + min(0, di)]
        diff = np.abs(a - b)
        per_offset[k] = float(np.nanmax(diff)) if np.isfinite(diff).any() else 0.0

    reach = [dist <= radius * (1 + 1e-12) for radius in r]
    table = np.array([per_offset[within].max(initial=0.0) for within in reach])
    return TableModulus.from_running_max(r, table)


@dataclass
class ProductCheck:
    """Per-radius comparison of ω_{fg} against ‖f‖ω_g + ‖g‖ϱ_f."""

    radii: List[float]
    measured: List[float]
    bound: List[float]
    tolerance: float
    passed: bool
    slack: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "radii": self.radii,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }

    def to_csv(self) -> str:
        return modulus_table_csv(self.radii, self.measured, self.slack)


def product_oscillation_check(
    f: ScalarField,
    g: ScalarField,
    radii: Sequence[float],
    tol: float = 0.05,
    stride: int = 1,
) -> ProductCheck:
    """Check ω_{fg}(r) ≤ ‖f‖_∞ ω_g(r) + ‖g‖_∞ ϱ_f(r) at every radius."""
    r = _check_radii(f, radii)
    prod = ScalarField(f.grid, f.values * g.values)
    omega_fg = empirical_mean_oscillation(prod, r, stride=stride).raw
    omega_g = empirical_mean_oscillation(g, r, stride=stride).raw
    rho_f = empirical_continuity_modulus(f, r)(r)

    bound = f.sup_norm() * omega_g + g.sup_norm() * rho_f
    ok = bool(np.all(omega_fg <= bound * (1.0 + tol) + 1e-14))
    return ProductCheck(
        radii=r.tolist(),
        measured=omega_fg.tolist(),
        bound=bound.tolist(),
        slack=(bound - omega_fg).tolist(),
        tolerance=tol,
        passed=ok,
    )
