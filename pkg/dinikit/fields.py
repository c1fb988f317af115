"""Grid-sampled fields on 2D domains with interpolation and FD derivatives.

Arrays are laid out ``values[j, i]`` with ``j`` indexing ``y`` and ``i``
indexing ``x``; point arrays have shape ``(N, 2)`` in ``(x, y)`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .exceptions import ParameterError

PointFunction = Callable[[np.ndarray], np.ndarray]


def as_points(points: np.ndarray) -> np.ndarray:
    """Coerce a point or a point list to an ``(N, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParameterError(f"Expected points of shape (N, 2), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid with a node mask marking the domain."""

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray

    @classmethod
    def uniform(
        cls,
        bounds: Tuple[float, float, float, float],
        shape: Tuple[int, int],
        region: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> "Grid2D":
        """Grid over ``bounds = (x0, x1, y0, y1)`` with ``shape = (nx, ny)`` nodes."""
        x0, x1, y0, y1 = bounds
        nx, ny = shape
        if nx < 2 or ny < 2 or not (x1 > x0 and y1 > y0):
            raise ParameterError(f"Invalid grid bounds {bounds} or shape {shape}")
        x = np.linspace(x0, x1, nx)
        y = np.linspace(y0, y1, ny)
        mask = np.ones((ny, nx), dtype=bool)
        grid = cls(x=x, y=y, mask=mask)
        if region is not None:
            inside = np.asarray(region(grid.points()), dtype=bool)
            grid = cls(x=x, y=y, mask=inside.reshape(ny, nx))
        return grid

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.y.size, self.x.size)

    @property
    def h(self) -> Tuple[float, float]:
        return (float(self.x[1] - self.x[0]), float(self.y[1] - self.y[0]))

    @property
    def cell_area(self) -> float:
        hx, hy = self.h
        return hx * hy

    def meshgrid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="xy")

    def points(self) -> np.ndarray:
        X, Y = self.meshgrid()
        return np.column_stack([X.ravel(), Y.ravel()])

    def active_points(self) -> np.ndarray:
        return self.points()[self.mask.ravel()]

    def ball_mask(self, center: np.ndarray, radius: float) -> np.ndarray:
        X, Y = self.meshgrid()
        c = np.asarray(center, dtype=float)
        return ((X - c[0]) ** 2 + (Y - c[1]) ** 2 <= radius**2) & self.mask

    def with_mask(self, mask: np.ndarray) -> "Grid2D":
        return Grid2D(x=self.x, y=self.y, mask=np.asarray(mask, dtype=bool) & self.mask)


class GridField:
    """Values sampled on a Grid2D, optionally backed by an exact point function."""

    value_shape: Tuple[int, ...] = ()

    def __init__(
        self,
        grid: Grid2D,
        values: np.ndarray,
        func: Optional[PointFunction] = None,
    ) -> None:
        values = np.asarray(values, dtype=float)
        expected = grid.shape + self.value_shape
        if values.shape != expected:
            raise ParameterError(
                f"Field values have shape {values.shape}, expected {expected}"
            )
        self.grid = grid
        self.values = values
        self.func = func
        self._interp: Optional[RegularGridInterpolator] = None

    @classmethod
    def from_function(cls, grid: Grid2D, func: PointFunction):
        """Sample ``func`` on all nodes (mask ignored) and keep it for exact values."""
        vals = np.asarray(func(grid.points()), dtype=float)
        return cls(grid, vals.reshape(grid.shape + cls.value_shape), func=func)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        if self.func is not None:
            return np.asarray(self.func(pts), dtype=float)
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                (self.grid.y, self.grid.x),
                self.values,
                bounds_error=False,
                fill_value=np.nan,
            )
        return self._interp(pts[:, ::-1])

    def masked(self) -> np.ndarray:
        """Values at active nodes, shape ``(M, *value_shape)``."""
        return self.values[self.grid.mask]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean/Frobenius magnitude on the grid."""
        if not self.value_shape:
            return np.abs(self.values)
        axes = tuple(range(2, self.values.ndim))
        return np.sqrt(np.sum(self.values**2, axis=axes))

    def sup_norm(self, mask: Optional[np.ndarray] = None) -> float:
        m = self.grid.mask if mask is None else mask
        mag = self.magnitude()[m]
        mag = mag[np.isfinite(mag)]
        return float(mag.max()) if mag.size else 0.0

    def l1_norm(self, mask: Optional[np.ndarray] = None) -> float:
        m = self.grid.mask if mask is None else mask
        mag = self.magnitude()[m]
        return float(np.nansum(mag) * self.grid.cell_area)


class ScalarField(GridField):
    """Scalar function sampled on a grid."""

    value_shape = ()

    def gradient(self) -> "VectorField":
        """Second-order FD gradient (one-sided at grid edges)."""
        dy, dx = np.gradient(self.values, self.grid.y, self.grid.x, edge_order=2)
        return VectorField(self.grid, np.stack([dx, dy], axis=-1))

    def hessian(self) -> "MatrixField":
        grad = self.gradient().values
        dxx_y, dxx_x = np.gradient(grad[..., 0], self.grid.y, self.grid.x, edge_order=2)
        dyy_y, dyy_x = np.gradient(grad[..., 1], self.grid.y, self.grid.x, edge_order=2)
        dxy = 0.5 * (dxx_y + dyy_x)
        hess = np.stack(
            [np.stack([dxx_x, dxy], axis=-1), np.stack([dxy, dyy_y], axis=-1)],
            axis=-2,
        )
        return MatrixField(self.grid, hess)


class VectorField(GridField):
    """Vector-valued (2 components) function on a grid."""

    value_shape = (2,)

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., k])


class MatrixField(GridField):
    """2×2-matrix-valued function on a grid."""

    value_shape = (2, 2)

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., i, j])


def p_mean(values: np.ndarray, p: float) -> float:
    """(mean |v|^p)^{1/p} over the finite entries of ``values``."""
    if not p > 0:
        raise ParameterError(f"p must be positive, got {p}")
    v = np.abs(np.asarray(values, dtype=float))
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0
    return float(np.mean(v**p) ** (1.0 / p))


def sym_matrix_norm(values: np.ndarray) -> np.ndarray:
    """Frobenius norm of 2×2 matrices stored as ``(..., 2, 2)``."""
    return np.sqrt(np.sum(np.asarray(values) ** 2, axis=(-2, -1)))


def fd_gradient(func: PointFunction, points: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Central-difference gradient of a scalar point function, per-point step ``h``."""
    pts = as_points(points)
    h = np.broadcast_to(np.asarray(h, dtype=float), (pts.shape[0],))
    out = np.empty_like(pts)
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        step = h[:, None] * e
        out[:, k] = (func(pts + step) - func(pts - step)) / (2.0 * h)
    return out


def fd_hessian(func: PointFunction, points: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Central-difference Hessian of a scalar point function."""
    pts = as_points(points)
    h = np.broadcast_to(np.asarray(h, dtype=float), (pts.shape[0],))
    hh = h[:, None]
    ex = np.array([1.0, 0.0])
    ey = np.array([0.0, 1.0])
    f0 = func(pts)
    fxp, fxm = func(pts + hh * ex), func(pts - hh * ex)
    fyp, fym = func(pts + hh * ey), func(pts - hh * ey)
    fpp = func(pts + hh * (ex + ey))
    fmm = func(pts - hh * (ex + ey))
    fpm = func(pts + hh * (ex - ey))
    fmp = func(pts - hh * (ex - ey))
    out = np.empty((pts.shape[0], 2, 2))
    out[:, 0, 0] = (fxp - 2 * f0 + fxm) / h**2
    out[:, 1, 1] = (fyp - 2 * f0 + fym) / h**2
    out[:, 0, 1] = out[:, 1, 0] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return out


def fd_third(func: PointFunction, points: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Third derivatives ``T[:, k, i, j] = D_k D_{ij} f`` from differenced Hessians."""
    pts = as_points(points)
    h = np.broadcast_to(np.asarray(h, dtype=float), (pts.shape[0],))
    out = np.empty((pts.shape[0], 2, 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        step = h[:, None] * e
        forward = fd_hessian(func, pts + step, h)
        backward = fd_hessian(func, pts - step, h)
        out[:, k] = (forward - backward) / (2.0 * h[:, None, None])
    return out


def richardson(
    estimate: Callable[[np.ndarray], np.ndarray], h: np.ndarray, order: int = 2
) -> np.ndarray:
    """Combine estimates at steps h and h/2 to cancel the leading O(h^order) error."""
    coarse = estimate(h)
    fine = estimate(h / 2.0)
    factor = 2.0**order
    return (factor * fine - coarse) / (factor - 1.0)
