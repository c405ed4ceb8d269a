"""
Probabilistic spatial discretisation.

Global collocation conditions a Gaussian process on all grid values at once,
localised collocation does the same on small nearest-neighbour stencils and
returns a banded differentiation matrix with a diagonal error covariance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .exceptions import (
    ConfigError,
    DimensionMismatchError,
    GramFactorizationError,
    NegativeErrorVarianceError,
    StencilRadiusError,
)
from .kernels import (
    DiffOperator,
    Kernel,
    KernelFamily,
    OperatorKind,
    apply_both,
    apply_left,
    gram,
)
from .utils import cho_solve_psd, logger, psd_violation, symmetrize, verbose_debug

# Relative singular value cutoff of the polynomial-kernel pseudo-inverse
PINV_RCOND = 1e-10
# Error variances in [-tol, 0) are rounding noise and are clamped to zero
NEGATIVE_VARIANCE_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered spatial points with a boundary flag per point."""

    points: np.ndarray
    boundary_mask: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        mask = np.asarray(self.boundary_mask, dtype=bool).reshape(-1)
        if points.ndim != 2 or points.shape[0] == 0:
            raise DimensionMismatchError(f"grid points must be a nonempty (n, d) array, got {points.shape}")
        if mask.size != points.shape[0]:
            raise DimensionMismatchError(
                f"boundary mask has {mask.size} entries for {points.shape[0]} points"
            )
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise ConfigError("grid points must be pairwise distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "boundary_mask", mask)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)


def equispaced_grid(dx: float, domain: tuple[float, float] = (0.0, 1.0)) -> Grid:
    """1-D grid on `domain` with spacing close to `dx`; both end points are boundary points."""
    a, b = domain
    if not b > a:
        raise ConfigError(f"empty domain {domain}")
    if not dx > 0:
        raise ConfigError(f"dx must be positive, got {dx}")
    num_intervals = max(int(round((b - a) / dx)), 1)
    points = np.linspace(a, b, num_intervals + 1)
    mask = np.zeros(points.size, dtype=bool)
    mask[[0, -1]] = True
    return Grid(points[:, None], mask)


@dataclass(frozen=True)
class Stencil:
    center_index: int
    neighbor_indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.neighbor_indices)) != len(self.neighbor_indices):
            raise ConfigError(f"stencil indices {self.neighbor_indices} are not distinct")
        if self.center_index not in self.neighbor_indices:
            raise ConfigError(f"stencil {self.neighbor_indices} misses its center {self.center_index}")


class ApproxKind(str, Enum):
    GLOBAL = "global"
    LOCALIZED = "localized"


@dataclass(frozen=True, eq=False)
class OperatorApprox:
    """Differentiation matrix D and error covariance E of one operator on one grid."""

    D: np.ndarray
    E: np.ndarray
    grid: Grid
    kind: ApproxKind = ApproxKind.GLOBAL
    radius: Optional[int] = None

    def block_diag(self, num_fields: int) -> tuple[np.ndarray, np.ndarray]:
        """(I_L kron D, I_L kron E) for L fields stacked field-major."""
        eye = np.eye(num_fields)
        return np.kron(eye, self.D), np.kron(eye, self.E)

    def restrict(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rows of D and the matching principal submatrix of E."""
        rows = np.asarray(rows, dtype=int)
        return self.D[rows], self.E[np.ix_(rows, rows)]

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for name, matrix in (("D", self.D), ("E", self.E)):
            row, col = np.nonzero(matrix)
            frames.append(
                pd.DataFrame(
                    {"row": row, "col": col, "value": matrix[row, col], "matrix": name}
                )
            )
        return pd.concat(frames, ignore_index=True)


def _gram_solve(k: Kernel, K: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """K^{-1} rhs; pseudo-inverse for polynomial kernels whose Gram is rank deficient."""
    if k.family is KernelFamily.POLYNOMIAL:
        return np.linalg.pinv(K, rcond=PINV_RCOND, hermitian=True) @ rhs
    return cho_solve_psd(K, rhs, error_cls=GramFactorizationError, what=what)


def _identity_approx(grid: Grid, kind: ApproxKind, radius: Optional[int]) -> OperatorApprox:
    n = grid.size
    return OperatorApprox(np.eye(n), np.zeros((n, n)), grid, kind, radius)


def collocate_global(k: Kernel, op: DiffOperator, grid: Grid) -> OperatorApprox:
    """D = (op k)(X, X) k(X, X)^{-1} and E = (op k op*)(X, X) - D k(X, X) D^T."""
    _check_dimension(k, grid)
    if op.is_identity:
        return _identity_approx(grid, ApproxKind.GLOBAL, None)

    X = grid.points
    K = gram(k, X, X)
    LK = gram(apply_left(op, k), X, X)
    LLK = gram(apply_both(op, k), X, X)

    D = _gram_solve(k, K, LK.T, what=f"gram matrix on {grid.size} points").T
    E = symmetrize(LLK - D @ K @ D.T)

    violation = psd_violation(E)
    if violation > NEGATIVE_VARIANCE_RTOL:
        logger.warning(
            f"global {op.kind.value} error covariance is indefinite (relative violation {violation:.2e})"
        )
    verbose_debug("global D=%s", np.array2string(D, precision=3))
    return OperatorApprox(D, E, grid, ApproxKind.GLOBAL, None)


def select_stencil(grid: Grid, n: int, k: int) -> Stencil:
    """The 2k+1 nearest grid points to point n, ties broken by ascending index."""
    size = 2 * k + 1
    if k < 0 or size > grid.size:
        raise StencilRadiusError(
            f"stencil radius {k} needs {size} points, grid has {grid.size}"
        )
    if not 0 <= n < grid.size:
        raise DimensionMismatchError(f"point index {n} outside grid of {grid.size} points")

    center = grid.points[n]
    if grid.dimension == 1:
        candidates = np.arange(grid.size)
    else:
        # all points within the distance of the size-th nearest one, ties included
        dist, _ = grid.tree.query(center, k=size)
        radius = float(np.max(dist))
        candidates = np.asarray(
            grid.tree.query_ball_point(center, r=radius * (1.0 + 1e-9) + 1e-14), dtype=int
        )

    distances = np.linalg.norm(grid.points[candidates] - center, axis=1)
    scale = max(float(np.max(distances)), np.finfo(float).tiny)
    rounded = np.round(distances / scale, 9)
    order = np.lexsort((candidates, rounded))
    chosen = np.sort(candidates[order[:size]])
    return Stencil(int(n), tuple(int(i) for i in chosen))


def collocate_local(
    k: Kernel,
    op: DiffOperator,
    grid: Grid,
    radius: int = 1,
    max_workers: Optional[int] = None,
) -> OperatorApprox:
    """PN finite differences: one stencil-local conditioning per row.

    Rows can be assembled on a thread pool; the output is identical to the
    serial assembly.
    """
    _check_dimension(k, grid)
    if 2 * radius + 1 > grid.size:
        raise StencilRadiusError(
            f"stencil radius {radius} needs {2 * radius + 1} points, grid has {grid.size}"
        )
    if op.is_identity:
        return _identity_approx(grid, ApproxKind.LOCALIZED, radius)

    left = apply_left(op, k)
    both = apply_both(op, k)

    def assemble_row(n: int) -> tuple[np.ndarray, np.ndarray, float]:
        stencil = select_stencil(grid, n, radius)
        idx = np.asarray(stencil.neighbor_indices)
        X_loc = grid.points[idx]
        x_n = grid.points[n : n + 1]
        K_loc = gram(k, X_loc, X_loc)
        lk = gram(left, x_n, X_loc)[0]
        d_n = _gram_solve(k, K_loc, lk, what=f"stencil gram matrix at point {n}")
        prior = float(gram(both, x_n, x_n)[0, 0])
        explained = float(d_n @ K_loc @ d_n)
        e_n = prior - explained
        tol = NEGATIVE_VARIANCE_RTOL * max(abs(prior), abs(explained), np.finfo(float).tiny)
        if e_n < -tol:
            raise NegativeErrorVarianceError(
                f"error variance {e_n:.3e} at point {n} is below -{tol:.1e}"
            )
        return idx, d_n, max(e_n, 0.0)

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            rows = list(executor.map(assemble_row, range(grid.size)))
    else:
        rows = [assemble_row(n) for n in range(grid.size)]

    D = np.zeros((grid.size, grid.size))
    e = np.zeros(grid.size)
    for n, (idx, d_n, e_n) in enumerate(rows):
        D[n, idx] = d_n
        e[n] = e_n

    logger.debug(
        f"localized {op.kind.value}: radius {radius}, {grid.size} rows, max e_n {e.max():.3e}"
    )
    return OperatorApprox(D, np.diag(e), grid, ApproxKind.LOCALIZED, radius)


def collocate_boundary(
    k: Kernel,
    bop: DiffOperator,
    grid: Grid,
    radius: Optional[int] = None,
) -> OperatorApprox:
    """Boundary operator matrix B and error covariance R, on all rows of the grid.

    Dirichlet (identity) gives B = I and R = 0. Neumann rows use the global
    construction, or PN finite differences when a radius is given.
    """
    if bop.kind is OperatorKind.LAPLACIAN:
        raise ConfigError("boundary operator must be identity or a directional derivative")
    return collocate(k, bop, grid, radius)


def collocate(
    k: Kernel, op: DiffOperator, grid: Grid, radius: Optional[int] = None
) -> OperatorApprox:
    """Global collocation for radius None, localised otherwise."""
    if radius is None:
        return collocate_global(k, op, grid)
    return collocate_local(k, op, grid, radius)


def _check_dimension(k: Kernel, grid: Grid):
    if k.dimension != grid.dimension:
        raise DimensionMismatchError(
            f"kernel dimension {k.dimension} does not match grid dimension {grid.dimension}"
        )
