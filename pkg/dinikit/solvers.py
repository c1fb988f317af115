"""Desk-scale 2D solvers: conormal (Q1 FEM), mixed nondivergence (9-point FD),
the reflection construction and the frozen-coefficient corrector.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import bmat, coo_matrix, csc_matrix, csr_matrix
from scipy.sparse.linalg import bicgstab, gmres, spilu, spsolve, LinearOperator
from typing_extensions import Literal

from .exceptions import (
    NumericError,
    ParameterError,
    ResolutionError,
    SingularSystemError,
)
from .fields import (
    Grid2D,
    MatrixField,
    PointFunction,
    ScalarField,
    VectorField,
    as_points,
    p_mean,
)
from .store import csv_table

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 300 * 300
SOLVER_TOLERANCE = 1e-10
MIN_THETA = 0.05
MIN_CELLS_PER_RADIUS = 4

_GAUSS = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)


# Domains -------------------------------------------------------------------


class Shape(ABC):
    """A 2D solver domain described by a level function (< 0 inside).

    Shapes with ``flat_y`` set are cut off below that line; the cut is the
    flat boundary piece T.
    """

    name = "shape"
    flat_y: Optional[float] = None

    @property
    @abstractmethod
    def bounds(self) -> Tuple[float, float, float, float]:
        """Bounding box ``(x0, x1, y0, y1)``."""

    @abstractmethod
    def level(self, points: np.ndarray) -> np.ndarray:
        """Signed level of the curved boundary, negative inside."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        ...

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        inside = self.level(pts) < 0
        if self.flat_y is not None:
            inside &= pts[:, 1] >= self.flat_y - 1e-12
        return inside

    def level_normal(self, points: np.ndarray, h: float = 1e-7) -> np.ndarray:
        pts = as_points(points)
        grad = np.empty_like(pts)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            grad[:, k] = (self.level(pts + e) - self.level(pts - e)) / (2 * h)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        return grad / np.where(norm > 0, norm, 1.0)

    def boundary_normal(
        self, points: np.ndarray, face_normals: np.ndarray
    ) -> np.ndarray:
        """True outward normal at staircase face points."""
        pts = as_points(points)
        nu = self.level_normal(pts)
        if self.flat_y is not None:
            on_line = np.abs(pts[:, 1] - self.flat_y) < 1e-9
            flat = on_line & (face_normals[:, 1] < -0.5)
            nu[flat] = (0.0, -1.0)
        return nu

    def grid(self, n: int) -> Grid2D:
        """Node grid with ``n`` cells across the x-extent; mask marks closed-domain nodes."""
        x0, x1, y0, y1 = self.bounds
        h = (x1 - x0) / n
        ny = max(2, int(round((y1 - y0) / h)) + 1)
        return Grid2D.uniform((x0, x1, y0, y1), (n + 1, ny), region=self._closed)

    def _closed(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        inside = self.level(pts) <= 1e-12
        if self.flat_y is not None:
            inside &= pts[:, 1] >= self.flat_y - 1e-12
        return inside


class Box(Shape):
    name = "box"

    def __init__(
        self, x0: float = 0.0, x1: float = 1.0, y0: float = 0.0, y1: float = 1.0
    ) -> None:
        if not (x1 > x0 and y1 > y0):
            raise ParameterError(f"Degenerate box {(x0, x1, y0, y1)}")
        self.box = (float(x0), float(x1), float(y0), float(y1))

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return self.box

    def level(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points)
        x0, x1, y0, y1 = self.box
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        return np.maximum(
            np.abs(pts[:, 0] - cx) - 0.5 * (x1 - x0),
            np.abs(pts[:, 1] - cy) - 0.5 * (y1 - y0),
        )

    def boundary_normal(
        self, points: np.ndarray, face_normals: np.ndarray
    ) -> np.ndarray:
        return np.asarray(face_normals, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.name, "bounds": list(self.box)}


class Ball(Shape):
    name = "ball"

    def __init__(
        self, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0
    ) -> None:
        if not radius > 0:
            raise ParameterError(f"Radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def level(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(as_points(points) - self.center, axis=1) - self.radius

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.name,
            "center": self.center.tolist(),
            "radius": self.radius,
        }


class HalfBall(Ball):
    """B⁺(c, R) = B(c, R) ∩ {y > c_y}; flat part T on y = c_y."""

    name = "half_ball"

    def __init__(
        self, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0
    ) -> None:
        super().__init__(center, radius)
        self.flat_y = float(self.center[1])

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy, cy + r)


class SmoothHalfBall(HalfBall):
    """Upper half of the super-ellipse |x|⁴ + |y|⁴ < (aR)⁴ with a = 2^{-1/4}.

    Satisfies B⁺(c, R/2) ⊂ 𝒟 ⊂ B⁺(c, R); its even reflection across the flat
    part is a smooth closed curve.
    """

    name = "smooth_half_ball"
    power = 4.0

    def level(self, points: np.ndarray) -> np.ndarray:
        d = np.abs(as_points(points) - self.center)
        scale = self.radius * 2.0 ** (-1.0 / self.power)
        norm = (d[:, 0] ** self.power + d[:, 1] ** self.power) ** (1.0 / self.power)
        return norm - scale


def shape_from_dict(data: Dict[str, Any]) -> Shape:
    kind = data.get("kind")
    if kind == "box":
        return Box(*data["bounds"])
    classes = {"ball": Ball, "half_ball": HalfBall, "smooth_half_ball": SmoothHalfBall}
    if kind not in classes:
        raise ParameterError(f"Unknown domain kind {kind!r}")
    return classes[kind](data.get("center", (0.0, 0.0)), data.get("radius", 1.0))


# Coefficients --------------------------------------------------------------


@dataclass
class CoefficientField:
    """Operator coefficients as point functions.

    ``A`` maps ``(N, 2)`` points to ``(N, 2, 2)`` matrices; ``a`` and ``b``
    to ``(N, 2)`` vectors; ``a0`` and ``c`` to ``(N,)``. Missing lower-order
    terms are zero.
    """

    A: Callable[[np.ndarray], np.ndarray]
    a: Optional[Callable[[np.ndarray], np.ndarray]] = None
    b: Optional[Callable[[np.ndarray], np.ndarray]] = None
    a0: Optional[PointFunction] = None
    c: Optional[PointFunction] = None
    symmetric: bool = True
    name: str = "coefficients"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def constant(
        cls, matrix: Sequence[Sequence[float]], name: str = "constant"
    ) -> "CoefficientField":
        M = np.asarray(matrix, dtype=float)
        if M.shape != (2, 2):
            raise ParameterError(f"Coefficient matrix must be 2×2, got {M.shape}")

        def A(points: np.ndarray) -> np.ndarray:
            return np.broadcast_to(M, (as_points(points).shape[0], 2, 2)).copy()

        return cls(
            A=A,
            symmetric=bool(np.allclose(M, M.T)),
            name=name,
            params={"matrix": M.tolist()},
        )

    def matrix(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.A(as_points(points)), dtype=float)

    def vector(self, which: Literal["a", "b"], points: np.ndarray) -> np.ndarray:
        func = self.a if which == "a" else self.b
        pts = as_points(points)
        if func is None:
            return np.zeros((pts.shape[0], 2))
        return np.asarray(func(pts), dtype=float)

    def scalar(self, which: Literal["a0", "c"], points: np.ndarray) -> np.ndarray:
        func = self.a0 if which == "a0" else self.c
        pts = as_points(points)
        if func is None:
            return np.zeros(pts.shape[0])
        return np.asarray(func(pts), dtype=float)

    @property
    def has_zero_order(self) -> bool:
        return any(t is not None for t in (self.a, self.a0, self.c))

    def ellipticity(self, points: np.ndarray) -> Tuple[float, float]:
        """(λ, Λ): least eigenvalue of the symmetric part and sup of the Frobenius norm."""
        M = self.matrix(points)
        sym = 0.5 * (M + np.transpose(M, (0, 2, 1)))
        lam = float(np.linalg.eigvalsh(sym).min())
        Lam = float(np.sqrt(np.sum(M**2, axis=(1, 2))).max())
        if lam <= 0:
            raise ParameterError(
                f"Coefficients are not uniformly elliptic (λ = {lam:.3e})"
            )
        return lam, Lam

    def sample(self, grid: Grid2D) -> MatrixField:
        return MatrixField.from_function(grid, self.matrix)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "params": self.params, "symmetric": self.symmetric}


# Problems and solutions ----------------------------------------------------


@dataclass
class DiscreteProblem:
    """Inputs of one discrete solve."""

    kind: Literal["conormal", "mixed", "dirichlet"]
    domain: Shape
    coeffs: CoefficientField
    resolution: int
    f: Optional[PointFunction] = None
    g: Optional[Callable[[np.ndarray], np.ndarray]] = None
    g0: Optional[PointFunction] = None
    dirichlet: Optional[PointFunction] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "domain": self.domain.to_dict(),
            "coefficients": self.coeffs.to_dict(),
            "resolution": self.resolution,
        }


@dataclass
class DiscreteSolution:
    """Nodal solution on a masked grid with FD derivative evaluators."""

    problem: DiscreteProblem
    field: ScalarField
    residual: float
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> Grid2D:
        return self.field.grid

    @property
    def h(self) -> float:
        return max(self.grid.h)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.field(points)

    @cached_property
    def gradient(self) -> VectorField:
        return self.field.gradient()

    @cached_property
    def hessian(self) -> MatrixField:
        return self.field.hessian()

    @cached_property
    def third(self) -> np.ndarray:
        """``T[j, i, k, a, b] = D_k D_{ab} u`` on the grid."""
        hess = self.hessian.values
        out = np.empty(hess.shape[:2] + (2, 2, 2))
        for a in range(2):
            for b in range(2):
                dy, dx = np.gradient(
                    hess[..., a, b], self.grid.y, self.grid.x, edge_order=2
                )
                out[..., 0, a, b] = dx
                out[..., 1, a, b] = dy
        return out

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        return _interpolate(self.grid, self.gradient.values, points)

    def hessian_at(self, points: np.ndarray) -> np.ndarray:
        return _interpolate(self.grid, self.hessian.values, points)

    def max_error(
        self, exact: PointFunction, mask: Optional[np.ndarray] = None
    ) -> float:
        m = self.grid.mask if mask is None else mask
        pts = self.grid.points()[m.ravel()]
        return float(np.max(np.abs(self.field.values[m] - exact(pts))))

    def to_csv(self) -> str:
        pts = self.grid.points()
        u = self.field.values.ravel()
        du = self.gradient.values.reshape(-1, 2)
        d2u = self.hessian.values.reshape(-1, 2, 2)
        k = self.grid.mask.ravel()
        return csv_table(
            ["x", "y", "u", "ux", "uy", "uxx", "uxy", "uyy"],
            [
                pts[k, 0],
                pts[k, 1],
                u[k],
                du[k, 0],
                du[k, 1],
                d2u[k, 0, 0],
                d2u[k, 0, 1],
                d2u[k, 1, 1],
            ],
        )


def _interpolate(grid: Grid2D, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    interp = RegularGridInterpolator(
        (grid.y, grid.x), values, bounds_error=False, fill_value=np.nan
    )
    return interp(as_points(points)[:, ::-1])


def _solve_linear(
    matrix: csr_matrix, rhs: np.ndarray, tol: float = SOLVER_TOLERANCE
) -> Tuple[np.ndarray, float]:
    """Sparse direct solve on desk-size systems, ILU-preconditioned GMRES beyond."""
    n = matrix.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        sol = spsolve(csc_matrix(matrix), rhs)
    else:
        ilu = spilu(csc_matrix(matrix), drop_tol=1e-5, fill_factor=20)
        precond = LinearOperator(matrix.shape, ilu.solve)
        sol, info = gmres(matrix, rhs, M=precond, rtol=tol, restart=200, maxiter=2000)
        if info != 0:
            logger.debug(f"GMRES stopped with info={info}; retrying with BiCGSTAB")
            sol, info = bicgstab(matrix, rhs, x0=sol, M=precond, rtol=tol, maxiter=4000)
    if not np.all(np.isfinite(sol)):
        raise NumericError("Linear solve produced non-finite values")
    scale = max(float(np.linalg.norm(rhs)), 1.0)
    residual = float(np.linalg.norm(matrix @ sol - rhs)) / scale
    if residual > 1e3 * tol:
        raise NumericError(f"Linear solve residual {residual:.3e} exceeds tolerance")
    return sol, residual


# Conormal problem (Q1 finite elements) -------------------------------------


def _q1_reference() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss points (ξ, η), shape values (4, 4) and reference gradients (4, 4, 2)."""
    xi, eta = np.meshgrid(_GAUSS, _GAUSS, indexing="xy")
    xi, eta = xi.ravel(), eta.ravel()
    phi = np.stack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1
    )
    dxi = np.stack([-(1 - eta), (1 - eta), eta, -eta], axis=1)
    deta = np.stack([-(1 - xi), -xi, xi, (1 - xi)], axis=1)
    return np.column_stack([xi, eta]), phi, np.stack([dxi, deta], axis=-1)


def solve_conormal(
    coeffs: CoefficientField,
    domain: Shape,
    resolution: int = 32,
    g: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    g0: Optional[PointFunction] = None,
    f: Optional[PointFunction] = None,
    pin_mean: bool = True,
) -> DiscreteSolution:
    """Solve div(A∇u + a⃗u) + b⃗·∇u + cu = div g⃗ + f with conormal data.

    Boundary condition A∇u·ν + a⃗u·ν + a⁰u = g⃗·ν + g⁰. Bilinear elements on
    the cells whose centres lie in ``domain``. Pure-Neumann problems (no a⃗,
    a⁰, c) are solved with a mean-zero constraint when ``pin_mean`` is set;
    the Lagrange multiplier measures the data's incompatibility.
    """
    problem = DiscreteProblem("conormal", domain, coeffs, resolution, f=f, g=g, g0=g0)
    node_grid = domain.grid(resolution)
    x, y = node_grid.x, node_grid.y
    nx, ny = x.size, y.size
    hx, hy = node_grid.h

    cx = 0.5 * (x[:-1] + x[1:])
    cy = 0.5 * (y[:-1] + y[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="xy")
    centres = np.column_stack([CX.ravel(), CY.ravel()])
    cell_mask = domain.contains(centres).reshape(ny - 1, nx - 1)
    cj, ci = np.nonzero(cell_mask)
    if cj.size == 0:
        raise ResolutionError("No active cells; increase the resolution")

    nodes = np.stack(
        [cj * nx + ci, cj * nx + ci + 1, (cj + 1) * nx + ci + 1, (cj + 1) * nx + ci],
        axis=1,
    )
    gauss, phi, dref = _q1_reference()
    grads = dref / np.array([hx, hy])
    weight = 0.25 * hx * hy

    qpts = np.empty((cj.size, 4, 2))
    qpts[..., 0] = x[ci][:, None] + gauss[None, :, 0] * hx
    qpts[..., 1] = y[cj][:, None] + gauss[None, :, 1] * hy
    flat_q = qpts.reshape(-1, 2)
    A_q = coeffs.matrix(flat_q).reshape(cj.size, 4, 2, 2)
    a_q = coeffs.vector("a", flat_q).reshape(cj.size, 4, 2)
    b_q = coeffs.vector("b", flat_q).reshape(cj.size, 4, 2)
    c_q = coeffs.scalar("c", flat_q).reshape(cj.size, 4)
    g_q = np.zeros((cj.size, 4, 2))
    if g is not None:
        g_q = np.asarray(g(flat_q), dtype=float).reshape(cj.size, 4, 2)
    f_q = np.zeros((cj.size, 4))
    if f is not None:
        f_q = np.asarray(f(flat_q), dtype=float).reshape(cj.size, 4)

    K = np.zeros((cj.size, 4, 4))
    F = np.zeros((cj.size, 4))
    mass = np.zeros((cj.size, 4))
    for q in range(4):
        G = grads[q]
        p = phi[q]
        K += weight * np.einsum("ik,ekl,jl->eij", G, A_q[:, q], G)
        K += weight * np.einsum("ek,ik,j->eij", a_q[:, q], G, p)
        K -= weight * np.einsum("ek,jk,i->eij", b_q[:, q], G, p)
        K -= weight * c_q[:, q, None, None] * np.outer(p, p)[None]
        F += weight * (np.einsum("ek,ik->ei", g_q[:, q], G) - f_q[:, q, None] * p[None])
        mass += weight * p[None]

    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    vals = K.ravel()
    rhs_rows = nodes.ravel()
    rhs_vals = F.ravel()

    # Boundary faces: sides of active cells whose neighbour is inactive.
    padded = np.pad(cell_mask, 1)
    sides = [
        ((-1, 0), (0, 1), np.array([0.0, -1.0])),
        ((1, 0), (3, 2), np.array([0.0, 1.0])),
        ((0, -1), (0, 3), np.array([-1.0, 0.0])),
        ((0, 1), (1, 2), np.array([1.0, 0.0])),
    ]
    brows: List[np.ndarray] = []
    bcols: List[np.ndarray] = []
    bvals: List[np.ndarray] = []
    frows: List[np.ndarray] = []
    fvals: List[np.ndarray] = []
    for (dj, di), (la, lb), normal in sides:
        open_side = ~padded[cj + 1 + dj, ci + 1 + di]
        if not open_side.any():
            continue
        na = nodes[open_side, la]
        nb = nodes[open_side, lb]
        pa = np.column_stack([x[na % nx], y[na // nx]])
        pb = np.column_stack([x[nb % nx], y[nb // nx]])
        length = np.linalg.norm(pb - pa, axis=1)
        face_a0 = np.zeros((na.size, 2, 2))
        face_g0 = np.zeros((na.size, 2))
        for s in _GAUSS:
            pts = pa + s * (pb - pa)
            nu = domain.boundary_normal(pts, np.broadcast_to(normal, pts.shape))
            w = 0.5 * length * np.abs(nu @ normal)
            shape = np.array([1.0 - s, s])
            a0 = coeffs.scalar("a0", pts)
            face_a0 += (w * a0)[:, None, None] * np.outer(shape, shape)[None]
            if g0 is not None:
                face_g0 += (w * np.asarray(g0(pts), dtype=float))[:, None] * shape[None]
        pair = np.column_stack([na, nb])
        brows.append(np.repeat(pair, 2, axis=1).ravel())
        bcols.append(np.tile(pair, (1, 2)).ravel())
        bvals.append(face_a0.ravel())
        frows.append(pair.ravel())
        fvals.append(face_g0.ravel())

    if brows:
        rows = np.concatenate([rows] + brows)
        cols = np.concatenate([cols] + bcols)
        vals = np.concatenate([vals] + bvals)
        rhs_rows = np.concatenate([rhs_rows] + frows)
        rhs_vals = np.concatenate([rhs_vals] + fvals)

    total = nx * ny
    used = np.unique(nodes)
    index = -np.ones(total, dtype=int)
    index[used] = np.arange(used.size)
    matrix = coo_matrix(
        (vals, (index[rows], index[cols])), shape=(used.size, used.size)
    ).tocsr()
    rhs = np.bincount(index[rhs_rows], weights=rhs_vals, minlength=used.size)
    mass_vec = np.bincount(
        index[nodes.ravel()], weights=mass.ravel(), minlength=used.size
    )

    info: Dict[str, Any] = {
        "nodes": int(used.size),
        "cells": int(cj.size),
        "h": float(max(hx, hy)),
    }
    if coeffs.has_zero_order:
        sol, residual = _solve_linear(matrix, rhs)
    else:
        if not pin_mean:
            raise SingularSystemError(
                "Pure-Neumann system is singular; enable mean pinning"
            )
        border = csr_matrix(mass_vec[None, :])
        bordered = bmat([[matrix, border.T], [border, None]], format="csr")
        full, residual = _solve_linear(bordered, np.append(rhs, 0.0))
        sol = full[:-1]
        info["lagrange_multiplier"] = float(full[-1])
        if abs(full[-1]) > 1e-8 * max(1.0, float(np.abs(rhs).max())):
            logger.warning(f"Neumann data incompatible; multiplier {full[-1]:.3e}")

    values = np.full(total, np.nan)
    values[used] = sol
    mask = np.zeros(total, dtype=bool)
    mask[used] = True
    grid = Grid2D(x=x, y=y, mask=mask.reshape(ny, nx))
    logger.debug(
        f"Conormal solve on {domain.name}: {used.size} nodes, residual {residual:.2e}"
    )
    solved = ScalarField(grid, values.reshape(ny, nx))
    return DiscreteSolution(problem, solved, residual, info)


# Nondivergence problems (9-point FD) ---------------------------------------


class _StencilBuilder:
    """Row assembly for a^{ij}D_{ij}u + b^iD_iu + cu = f on a node grid.

    Neighbours below the flat part are reflected (D_n u = 0); neighbours
    outside the curved part are replaced by linear extrapolation through the
    boundary crossing at fraction θ of the step.
    """

    def __init__(self, domain: Shape, grid: Grid2D, dirichlet: PointFunction) -> None:
        self.domain = domain
        self.grid = grid
        self.dirichlet = dirichlet
        self.h = grid.h[0]
        ny, nx = grid.shape
        self.nx, self.ny = nx, ny
        pts = grid.points()
        candidate = (domain.level(pts) < 0).reshape(ny, nx)
        if domain.flat_y is not None:
            candidate &= (grid.y >= domain.flat_y - 1e-12)[:, None]
        self.candidate = candidate
        self.fixed = np.zeros_like(candidate)
        self.extrapolated = 0

        for j, i in zip(*np.nonzero(candidate)):
            for dj, di in _NEIGHBOURS:
                jq, iq = self._reflect(j + dj, i + di)
                if self._is_candidate(jq, iq):
                    continue
                if self._theta(j, i, jq, iq) < MIN_THETA:
                    self.fixed[j, i] = True
                    break
        self.unknown = candidate & ~self.fixed
        self.index = -np.ones(ny * nx, dtype=int)
        flat_idx = np.flatnonzero(self.unknown.ravel())
        self.index[flat_idx] = np.arange(flat_idx.size)

    def _reflect(self, j: int, i: int) -> Tuple[int, int]:
        if self.domain.flat_y is not None and j < 0:
            return -j, i
        return j, i

    def _is_candidate(self, j: int, i: int) -> bool:
        return 0 <= j < self.ny and 0 <= i < self.nx and bool(self.candidate[j, i])

    def _point(self, j: int, i: int) -> np.ndarray:
        x0, y0 = self.grid.x[0], self.grid.y[0]
        return np.array([x0 + i * self.h, y0 + j * self.grid.h[1]])

    def _theta(self, j: int, i: int, jq: int, iq: int) -> float:
        p, q = self._point(j, i), self._point(jq, iq)
        level_q = float(self.domain.level(q)[0])
        if level_q <= 0:
            return 1.0

        def level_along(s: float) -> float:
            return float(self.domain.level(p + s * (q - p))[0])

        return float(optimize.brentq(level_along, 0.0, 1.0, xtol=1e-14))

    def neighbour(
        self, j: int, i: int, dj: int, di: int
    ) -> Tuple[Dict[int, float], float]:
        jq, iq = self._reflect(j + dj, i + di)
        if self._is_candidate(jq, iq):
            if self.fixed[jq, iq]:
                return {}, float(self.dirichlet(self._point(jq, iq)[None])[0])
            return {int(self.index[jq * self.nx + iq]): 1.0}, 0.0
        theta = self._theta(j, i, jq, iq)
        self.extrapolated += 1
        p, q = self._point(j, i), self._point(jq, iq)
        gb = float(self.dirichlet((p + theta * (q - p))[None])[0])
        return {int(self.index[j * self.nx + i]): 1.0 - 1.0 / theta}, gb / theta


_NEIGHBOURS = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def _solve_nondivergence(
    problem: DiscreteProblem,
    n: int,
) -> DiscreteSolution:
    domain = problem.domain
    coeffs = problem.coeffs
    if not coeffs.symmetric:
        raise ParameterError(
            "Nondivergence solvers need a symmetric coefficient matrix"
        )
    x0, x1, y0, y1 = domain.bounds
    R = 0.5 * (x1 - x0)
    h = R / n
    ny = int(round((y1 - y0) / h)) + 1
    grid = Grid2D.uniform((x0, x1, y0, y1), (2 * n + 1, ny))
    dirichlet = problem.dirichlet or (lambda p: np.zeros(as_points(p).shape[0]))
    builder = _StencilBuilder(domain, grid, dirichlet)

    pts = grid.points()
    unknown = np.flatnonzero(builder.unknown.ravel())
    upts = pts[unknown]
    A = coeffs.matrix(upts)
    b = coeffs.vector("b", upts)
    c = coeffs.scalar("c", upts)
    f = np.zeros(unknown.size)
    if problem.f is not None:
        f = np.asarray(problem.f(upts), dtype=float)

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    rhs = f.copy()
    h2 = h * h
    nx = builder.nx
    for row, k in enumerate(unknown):
        j, i = divmod(int(k), nx)
        a11, a12, a22 = A[row, 0, 0], A[row, 0, 1], A[row, 1, 1]
        weights = {
            (0, 1): a11 / h2 + b[row, 0] / (2 * h),
            (0, -1): a11 / h2 - b[row, 0] / (2 * h),
            (1, 0): a22 / h2 + b[row, 1] / (2 * h),
            (-1, 0): a22 / h2 - b[row, 1] / (2 * h),
            (1, 1): a12 / (2 * h2),
            (-1, -1): a12 / (2 * h2),
            (1, -1): -a12 / (2 * h2),
            (-1, 1): -a12 / (2 * h2),
        }
        diag = -2.0 * (a11 + a22) / h2 + c[row]
        entries: Dict[int, float] = {row: diag}
        for (dj, di), w in weights.items():
            if w == 0.0:
                continue
            coef, const = builder.neighbour(j, i, dj, di)
            for col, cv in coef.items():
                entries[col] = entries.get(col, 0.0) + w * cv
            rhs[row] -= w * const
        for col, v in entries.items():
            rows.append(row)
            cols.append(col)
            vals.append(v)

    shape = (unknown.size, unknown.size)
    matrix = coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    sol, residual = _solve_linear(matrix, rhs)
    if builder.extrapolated:
        logger.debug(
            f"{builder.extrapolated} cut-cell neighbours use first-order extrapolation"
        )

    values = np.full(grid.shape[0] * grid.shape[1], np.nan)
    values[unknown] = sol
    fixed = np.flatnonzero(builder.fixed.ravel())
    if fixed.size:
        values[fixed] = dirichlet(pts[fixed])
    mask = (builder.unknown | builder.fixed)
    out_grid = Grid2D(x=grid.x, y=grid.y, mask=mask)
    info = {
        "nodes": int(unknown.size),
        "dirichlet_nodes": int(fixed.size),
        "extrapolated": builder.extrapolated,
        "h": h,
    }
    solved = ScalarField(out_grid, values.reshape(grid.shape))
    return DiscreteSolution(problem, solved, residual, info)


def solve_mixed_nd(
    coeffs: CoefficientField,
    f: Optional[PointFunction] = None,
    domain: Optional[HalfBall] = None,
    n: int = 32,
    dirichlet: Optional[PointFunction] = None,
) -> DiscreteSolution:
    """Solve a^{ij}D_{ij}u + b^iD_iu + cu = f on B⁺ with u = g on the curved
    part (g = 0 by default) and D_n u = 0 on the flat part.

    ``n`` is the number of grid cells per radius.
    """
    domain = domain or HalfBall()
    if domain.flat_y is None:
        raise ParameterError("Mixed problems need a domain with a flat part")
    problem = DiscreteProblem("mixed", domain, coeffs, n, f=f, dirichlet=dirichlet)
    return _solve_nondivergence(problem, n)


def solve_dirichlet_ball(
    coeffs: CoefficientField,
    f: Optional[PointFunction] = None,
    domain: Optional[Ball] = None,
    n: int = 32,
    dirichlet: Optional[PointFunction] = None,
) -> DiscreteSolution:
    """Nondivergence Dirichlet problem on a full ball."""
    domain = domain or Ball()
    if domain.flat_y is not None:
        raise ParameterError("Dirichlet ball solver expects a full ball")
    problem = DiscreteProblem("dirichlet", domain, coeffs, n, f=f, dirichlet=dirichlet)
    return _solve_nondivergence(problem, n)


# Reflection construction ---------------------------------------------------


@dataclass
class ReflectedProblem:
    """Â and f̂ on the full ball after normalizing a^{nn} to 1."""

    coeffs: CoefficientField
    f: PointFunction
    scale: float
    flat_y: float


def reflect_extend(
    coeffs: CoefficientField,
    f: PointFunction,
    flat_y: float = 0.0,
    points: Optional[np.ndarray] = None,
) -> ReflectedProblem:
    """Odd reflection of the mixed entries of a constant Ā and even reflection of f.

    â^{12} = â^{21} = sign(y)·ā^{12}, with the sign taken as 0 on the flat
    line itself.
    """
    pts = points
    if pts is None:
        pts = np.array([[0.0, 0.5], [0.3, 0.2], [-0.4, 0.6]])
    M = coeffs.matrix(pts)
    if not np.allclose(M, M[0], atol=1e-12):
        raise ParameterError("Reflection needs constant coefficients")
    bar = M[0]
    if bar[1, 1] <= 0:
        raise ParameterError(f"a^nn must be positive, got {bar[1, 1]}")
    if not np.allclose(bar, bar.T):
        raise ParameterError("Reflection needs a symmetric coefficient matrix")
    scale = float(bar[1, 1])
    norm = bar / scale

    def A_hat(points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        out = np.broadcast_to(norm, (p.shape[0], 2, 2)).copy()
        sign = np.sign(p[:, 1] - flat_y)
        out[:, 0, 1] = sign * norm[0, 1]
        out[:, 1, 0] = sign * norm[1, 0]
        return out

    def f_hat(points: np.ndarray) -> np.ndarray:
        p = as_points(points).copy()
        p[:, 1] = flat_y + np.abs(p[:, 1] - flat_y)
        return np.asarray(f(p), dtype=float) / scale

    reflected = CoefficientField(
        A=A_hat,
        symmetric=True,
        name=f"{coeffs.name}_reflected",
        params={"scale": scale},
    )
    return ReflectedProblem(coeffs=reflected, f=f_hat, scale=scale, flat_y=flat_y)


def evenness_defect(solution: DiscreteSolution, flat_y: float = 0.0) -> float:
    """max |û(x, y) − û(x, −y)| over node pairs of a reflection-symmetric grid."""
    vals = solution.field.values
    y = solution.grid.y
    mirrored = vals[::-1]
    if not np.allclose(y[::-1] - flat_y, -(y - flat_y), atol=1e-12):
        raise ParameterError("Grid is not symmetric about the flat line")
    diff = np.abs(vals - mirrored)
    return float(np.nanmax(diff))


def flat_trace_derivative(
    solution: DiscreteSolution, flat_y: float = 0.0, half_width: float = 0.5
) -> float:
    """max of the one-sided difference (û(x, h) − û(x, 0))/h over |x| ≤ half_width."""
    grid = solution.grid
    j0 = int(np.argmin(np.abs(grid.y - flat_y)))
    hy = grid.h[1]
    cols = np.abs(grid.x) <= half_width
    vals = solution.field.values
    d = (vals[j0 + 1, cols] - vals[j0, cols]) / hy
    return float(np.nanmax(np.abs(d)))


# Corrector -----------------------------------------------------------------


@dataclass
class CorrectorReport:
    """p-mean of the corrector derivative against its oscillation bound."""

    mode: str
    radius: float
    p: float
    p_mean: float
    omega_A: float
    omega_data: float
    derivative_sup: float
    rhs: float
    constant: float
    w: DiscreteSolution

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "radius": self.radius,
            "p": self.p,
            "p_mean": self.p_mean,
            "omega_A": self.omega_A,
            "omega_data": self.omega_data,
            "derivative_sup": self.derivative_sup,
            "rhs": self.rhs,
            "constant": self.constant,
        }


def _ball_average(values: np.ndarray) -> np.ndarray:
    return np.nanmean(values, axis=0)


def _oscillation(values: np.ndarray) -> float:
    """⨍|v − v̄| over samples, Frobenius norm for tensors."""
    mean = _ball_average(values)
    dev = values - mean
    if dev.ndim > 1:
        dev = np.sqrt(np.sum(dev.reshape(dev.shape[0], -1) ** 2, axis=1))
    return float(np.nanmean(np.abs(dev)))


def _fill_nan(arr: np.ndarray, what: str) -> np.ndarray:
    bad = ~np.isfinite(arr)
    if bad.any():
        logger.warning(
            f"{int(bad.sum())} {what} samples fall outside the solved patch; using 0"
        )
        arr = np.where(bad, 0.0, arr)
    return arr


def frozen_corrector(
    solution: DiscreteSolution,
    coeffs: CoefficientField,
    center: float,
    r: float,
    mode: Literal["divergence", "nondivergence"] = "divergence",
    g: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    f: Optional[PointFunction] = None,
    p: float = 0.5,
    n: int = 32,
    flat_y: float = 0.0,
) -> CorrectorReport:
    """Split u = v + w with coefficients frozen at their B⁺(x̄, 2r) average.

    Divergence mode solves div(Ā∇w) = div((Ā − A)∇u + g⃗ − ḡ) on the smooth
    half-ball 𝒟(x̄, 2r) with conormal data; nondivergence mode solves
    ā^{ij}D_{ij}w = (ā^{ij} − a^{ij})D_{ij}u + f − f̄ on B⁺(x̄, 2r) with the
    mixed boundary conditions. The p-mean of Dw (resp. D²w) over B⁺(x̄, r)
    is compared with ω_A(2r)‖Du‖ + ω_g(2r) (resp. with D²u and f).
    """
    if r < MIN_CELLS_PER_RADIUS * solution.h:
        raise ResolutionError(
            f"Radius {r:.3g} is below {MIN_CELLS_PER_RADIUS} cells of the solution grid"
        )
    xbar = np.array([center, flat_y])
    big = HalfBall(xbar, 2.0 * r)
    sample = big.grid(2 * n).active_points()
    A_s = coeffs.matrix(sample)
    A_bar = _ball_average(A_s)
    omega_A = _oscillation(A_s)
    frozen = CoefficientField.constant(A_bar, name="frozen")

    if mode == "divergence":
        g_s = np.zeros((sample.shape[0], 2))
        if g is not None:
            g_s = np.asarray(g(sample), dtype=float)
        g_bar = _ball_average(g_s)
        omega_data = _oscillation(g_s)
        du_s = _fill_nan(solution.gradient_at(sample), "Du")
        du_sup = float(np.nanmax(np.linalg.norm(du_s, axis=1)))

        def rhs_field(points: np.ndarray) -> np.ndarray:
            du = _fill_nan(solution.gradient_at(points), "Du")
            diff = A_bar[None] - coeffs.matrix(points)
            data = np.zeros_like(du)
            if g is not None:
                data = np.asarray(g(points), dtype=float)
            return np.einsum("nij,nj->ni", diff, du) + data - g_bar

        w = solve_conormal(
            frozen, SmoothHalfBall(xbar, 2.0 * r), resolution=2 * n, g=rhs_field
        )
        deriv = w.gradient.values
        magnitude = np.linalg.norm(deriv, axis=-1)
    elif mode == "nondivergence":
        f_s = np.zeros(sample.shape[0])
        if f is not None:
            f_s = np.asarray(f(sample), dtype=float)
        f_bar = float(np.mean(f_s))
        omega_data = _oscillation(f_s)
        d2u_s = _fill_nan(solution.hessian_at(sample), "D²u")
        du_sup = float(np.nanmax(np.linalg.norm(d2u_s, axis=(1, 2))))

        def rhs_scalar(points: np.ndarray) -> np.ndarray:
            d2u = _fill_nan(solution.hessian_at(points), "D²u")
            diff = A_bar[None] - coeffs.matrix(points)
            data = np.zeros(d2u.shape[0])
            if f is not None:
                data = np.asarray(f(points), dtype=float)
            return np.einsum("nij,nij->n", diff, d2u) + data - f_bar

        w = solve_mixed_nd(frozen, rhs_scalar, HalfBall(xbar, 2.0 * r), n=n)
        magnitude = np.sqrt(np.sum(w.hessian.values**2, axis=(-2, -1)))
    else:
        raise ParameterError(f"Unknown corrector mode {mode!r}")

    inner = w.grid.ball_mask(xbar, r)
    pm = p_mean(magnitude[inner], p)
    rhs = omega_A * du_sup + omega_data
    if rhs > 0:
        constant = pm / rhs
    else:
        constant = 0.0 if pm <= 1e-8 else np.inf
    logger.debug(f"Corrector ({mode}) r={r:.3g}: p-mean {pm:.3e}, rhs {rhs:.3e}")
    return CorrectorReport(
        mode, r, p, pm, omega_A, omega_data, du_sup, rhs, float(constant), w
    )


# Weak-(1,1) profiling ------------------------------------------------------


@dataclass
class Weak11Table:
    """C(t) = t·|{|D^k u| > t}| / ‖data‖_{L¹} over thresholds t."""

    thresholds: List[float]
    constants: List[float]
    data_l1: float
    order: int

    @property
    def sup(self) -> float:
        return max(self.constants) if self.constants else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "thresholds": self.thresholds,
            "constants": self.constants,
            "data_l1": self.data_l1,
            "order": self.order,
            "sup": self.sup,
        }


def weak11_profile(
    solution: DiscreteSolution,
    data_l1: float,
    thresholds: Sequence[float],
    order: int = 1,
    region: Optional[Shape] = None,
) -> Weak11Table:
    """Distribution-function profile of |Du| (order 1) or |D²u| (order 2)."""
    if order == 1:
        mag = np.linalg.norm(solution.gradient.values, axis=-1)
    elif order == 2:
        mag = np.sqrt(np.sum(solution.hessian.values**2, axis=(-2, -1)))
    else:
        raise ParameterError(f"order must be 1 or 2, got {order}")
    mask = solution.grid.mask
    if region is not None:
        mask = mask & region.contains(solution.grid.points()).reshape(mask.shape)
    vals = np.where(np.isfinite(mag), mag, 0.0)[mask]
    area = solution.grid.cell_area
    t = np.asarray(sorted(thresholds), dtype=float)
    if data_l1 <= 0:
        return Weak11Table(t.tolist(), [0.0] * t.size, data_l1, order)
    consts = [float(tt * area * np.count_nonzero(vals > tt) / data_l1) for tt in t]
    return Weak11Table(t.tolist(), consts, float(data_l1), order)


def weak11_stable(coarse: Weak11Table, fine: Weak11Table, factor: float = 2.0) -> bool:
    """sup C(t) changes by less than ``factor`` between two data radii."""
    a, b = coarse.sup, fine.sup
    if a == 0.0 and b == 0.0:
        return True
    lo, hi = min(a, b), max(a, b)
    return lo > 0 and hi / lo < factor


def annulus_decay(
    solution: DiscreteSolution,
    center: Sequence[float],
    r: float,
    data_l1: float,
    levels: int = 4,
) -> List[Tuple[float, float]]:
    """(R, ∫_{𝒟∖B(ȳ,R)} |Du| / ‖data‖_{L¹}) for R = 2r, 4r, …"""
    mag = np.linalg.norm(solution.gradient.values, axis=-1)
    mag = np.where(np.isfinite(mag), mag, 0.0)
    out = []
    for k in range(1, levels + 1):
        R = r * 2.0**k
        outside = solution.grid.mask & ~solution.grid.ball_mask(center, R)
        total = float(mag[outside].sum() * solution.grid.cell_area)
        out.append((R, total / data_l1 if data_l1 > 0 else 0.0))
    return out


# Lipschitz and third-derivative checks -------------------------------------


def lipschitz_ratio(
    solution: DiscreteSolution,
    p: float = 0.5,
    center: Sequence[float] = (0.0, 0.0),
    radius: float = 1.0,
) -> float:
    """‖Du‖_{L∞(B⁺_{R/2})} / (⨍_{B⁺_R}|u|^p)^{1/p}."""
    grid = solution.grid
    inner = grid.ball_mask(center, 0.5 * radius)
    outer = grid.ball_mask(center, radius)
    du = np.linalg.norm(solution.gradient.values, axis=-1)[inner]
    du = du[np.isfinite(du)]
    den = p_mean(solution.field.values[outer], p)
    if den == 0.0:
        return 0.0 if du.size == 0 or du.max() <= 1e-12 else np.inf
    return float(du.max() / den)


def third_derivative_identity(
    solution: DiscreteSolution,
    A_bar: np.ndarray,
    center: Sequence[float] = (0.0, 0.0),
    radius: float = 0.5,
) -> float:
    """max_m |D_{nnm}v − (−1/āⁿⁿ)Σ_{(i,j)≠(n,n)} ā^{ij}D_{ijm}v| relative to max|D³v|.

    Evaluated on B⁺(center, radius) away from the grid edges.
    """
    A_bar = np.asarray(A_bar, dtype=float)
    T = solution.third
    grid = solution.grid
    mask = grid.ball_mask(center, radius).copy()
    mask[:2, :] = False
    mask[-2:, :] = False
    mask[:, :2] = False
    mask[:, -2:] = False
    Tm = T[mask]
    finite = np.all(np.isfinite(Tm.reshape(Tm.shape[0], -1)), axis=1)
    Tm = Tm[finite]
    if Tm.size == 0:
        raise ResolutionError("No interior nodes to evaluate third derivatives")
    direct = Tm[:, :, 1, 1]
    weights = A_bar.copy()
    weights[1, 1] = 0.0
    recon = -np.einsum("ab,nmab->nm", weights, Tm) / A_bar[1, 1]
    scale = float(np.max(np.abs(Tm)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(direct - recon)) / scale)
