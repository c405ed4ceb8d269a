"""
High-accuracy reference solutions by classical method of lines.

Second-order finite differences on a refined mesh, fixed-step fourth-order
Runge-Kutta in time, snapshots on a save grid, linear interpolation in time
and space on evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.interpolate import RegularGridInterpolator

from ..base import BoundaryKind, PdeProblem
from ..exceptions import ConfigError, DimensionMismatchError, ReferenceInstabilityError
from ..utils import logger

MAX_STEP = 1e-3
MAX_SAVE_SPACING = 1e-3
# Real-axis stability interval of classical RK4 is about [-2.78, 0]
RK4_STABILITY = 2.78
BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    """Snapshots of shape (num_times, num_fields, num_points)."""
    provenance: str

    @property
    def num_fields(self) -> int:
        return self.values.shape[1]

    def __call__(self, t, x) -> np.ndarray:
        """Values at times t and 1-D points x, shape (len(t), num_fields, len(x))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float).reshape(len(np.atleast_1d(x)), -1)[:, 0]
        lo, hi = self.times[0], self.times[-1]
        if t.min() < lo - 1e-12 or t.max() > hi + 1e-12:
            raise ConfigError(f"reference covers [{lo}, {hi}], asked for [{t.min()}, {t.max()}]")
        t = np.clip(t, lo, hi)
        tt, xx = np.meshgrid(t, x, indexing="ij")
        query = np.stack([tt.ravel(), xx.ravel()], axis=-1)
        out = np.empty((t.size, self.num_fields, x.size))
        for field in range(self.num_fields):
            interp = RegularGridInterpolator(
                (self.times, self.points), self.values[:, field, :], method="linear"
            )
            out[:, field, :] = interp(query).reshape(t.size, x.size)
        return out


def fd_laplacian(
    n: int, h: float, boundary_kind: BoundaryKind
) -> scipy.sparse.csr_matrix:
    """Second-order Laplacian on n equispaced points including both ends.

    Dirichlet: boundary rows are zero. Neumann: mirrored ghost nodes.
    """
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    if boundary_kind is BoundaryKind.NEUMANN:
        upper[0] = 2.0
        lower[-1] = 2.0
    lap = scipy.sparse.diags([lower, main, upper], [-1, 0, 1], format="lil")
    if boundary_kind is BoundaryKind.DIRICHLET:
        lap[0, :] = 0.0
        lap[n - 1, :] = 0.0
    return lap.tocsr() / h**2


def reference_solve(
    p: PdeProblem, refinement: int = 10, dx: float = 0.2
) -> ReferenceSolution:
    """Reference for `p` on a mesh `refinement` times finer than spacing `dx`."""
    if refinement < 2:
        raise ConfigError(f"refinement must be at least 2, got {refinement}")
    a, b = p.domain
    num_intervals = max(int(round((b - a) / dx)), 1) * refinement
    x = np.linspace(a, b, num_intervals + 1)
    n = x.size
    h = (b - a) / num_intervals
    L = p.num_fields
    lap = scipy.sparse.kron(scipy.sparse.identity(L), fd_laplacian(n, h, p.boundary_kind), format="csr")

    boundary = np.array([0, n - 1])
    rows_b = (boundary[None, :] + n * np.arange(L)[:, None]).ravel()
    x_b = x[boundary][:, None]
    dirichlet = p.boundary_kind is BoundaryKind.DIRICHLET

    def neumann_source(t: float) -> np.ndarray:
        # ghost node carries the outward normal derivative g
        g = p.boundary_values(t, x_b).reshape(L, 2)
        src = np.zeros((L, n))
        src[:, 0] = 2.0 * g[:, 0] / h
        src[:, -1] = 2.0 * g[:, 1] / h
        return src.ravel()

    def rhs(t: float, u: np.ndarray) -> np.ndarray:
        du = lap @ u
        if dirichlet:
            du[rows_b] = 0.0
        else:
            du = du + neumann_source(t)
        f = np.asarray(p.vector_field(t, u, du), dtype=float)
        if dirichlet:
            f[rows_b] = 0.0
        return f

    t0, t1 = p.t_span
    u = np.asarray(p.initial_values(x[:, None]), dtype=float)
    if u.shape != (L * n,):
        raise DimensionMismatchError(f"{p.name}: initial values of shape {u.shape}, expected {(L * n,)}")

    # stiffness bound from diffusion and the reaction Jacobian at t0
    du0 = lap @ u
    diffusivity = float(np.max(np.abs(np.diag(p.jacobian_du(t0, u, du0)))))
    reaction = float(np.max(np.sum(np.abs(p.jacobian_u(t0, u, du0)), axis=1)))
    rho = 4.0 * diffusivity / h**2 + 2.0 * reaction
    step_bound = min(MAX_STEP, 0.9 * RK4_STABILITY / rho) if rho > 0 else MAX_STEP

    num_saves = max(int(math.ceil((t1 - t0) / MAX_SAVE_SPACING - 1e-9)), 1)
    save_spacing = (t1 - t0) / num_saves
    substeps = max(int(math.ceil(save_spacing / step_bound - 1e-9)), 1)
    dt = save_spacing / substeps

    snapshots = np.empty((num_saves + 1, L, n))
    snapshots[0] = u.reshape(L, n)
    if dirichlet:
        g = p.boundary_values(t0, x_b)
        u = u.copy()
        u[rows_b] = g
    t = t0
    for s in range(1, num_saves + 1):
        for _ in range(substeps):
            k1 = rhs(t, u)
            k2 = rhs(t + dt / 2, u + dt / 2 * k1)
            k3 = rhs(t + dt / 2, u + dt / 2 * k2)
            k4 = rhs(t + dt, u + dt * k3)
            u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_THRESHOLD:
            raise ReferenceInstabilityError(
                f"{p.name}: reference blew up at t={t:.4g} with step {dt:.3e}"
            )
        snapshots[s] = u.reshape(L, n)

    times = t0 + save_spacing * np.arange(num_saves + 1)
    times[-1] = t1
    provenance = (
        f"{p.name}: FD Laplacian on {n} points (h={h:.3e}, refinement {refinement}), "
        f"RK4 with dt={dt:.3e}, {num_saves} snapshots"
    )
    logger.info(f"Reference solution: {provenance}")
    return ReferenceSolution(times, x, snapshots, provenance)
