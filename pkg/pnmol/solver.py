"""
PNMOL solvers and the classical method-of-lines baseline.

All three variants share one pipeline: assemble a linear Gaussian prior and an
observation model (`build_state_space`), condition on the initial values and
the residual at t0 (`initialize`), then run the extended Kalman filter and
RTS smoother and calibrate the output scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .base import (
    BoundaryKind,
    GaussianBelief,
    PdeProblem,
    SolverConfig,
    SolverVariant,
    StateLayout,
)
from .discretize import Grid, OperatorApprox, collocate, collocate_boundary, equispaced_grid
from .exceptions import ConfigError, UnsupportedOperatorError
from .inference import (
    LinearizedObservation,
    ResidualRecord,
    calibrate,
    condition_on_coordinates,
    filter_and_smooth,
    linearize,
    update,
)
from .kernels import DiffOperator, gram
from .statespace import (
    DiscreteTransition,
    discretize_steps,
    iwp_sde,
    kron_lift,
    lift_initial,
    stack_beliefs,
    stack_transitions,
    time_grid,
)
from .utils import RuntimeTracker, floor_spectrum, logger


@dataclass(eq=False)
class StateSpaceModel:
    """Prior, transitions and observation model of one solve."""

    problem: PdeProblem
    config: SolverConfig
    grid: Grid
    layout: StateLayout
    times: np.ndarray
    prior: GaussianBelief
    transitions: list[DiscreteTransition]
    observe: Callable[[float, GaussianBelief], LinearizedObservation]
    D: np.ndarray
    """Differentiation matrix acting on the state's U block."""
    E: Optional[np.ndarray]
    """Error covariance matching D; None for the baseline."""
    initial_values: np.ndarray
    """Values the U block is conditioned on at t0."""
    embedding: np.ndarray
    """P in U_full = P U + c."""
    offsets: np.ndarray
    """c per time, shape (K + 1, L * n)."""


@dataclass(eq=False)
class SolutionPosterior:
    """Smoothed grid-time marginals of a solve; covariances are unscaled."""

    times: np.ndarray
    grid: Grid
    means: np.ndarray
    covs: np.ndarray
    gamma_sq: float
    layout: StateLayout
    num_fields: int
    variant: SolverVariant
    embedding: np.ndarray
    offsets: np.ndarray
    records: list[ResidualRecord] = field(default_factory=list)
    marginals: str = "smoothed"

    @property
    def state_dim(self) -> int:
        return self.layout.dim

    @property
    def num_steps(self) -> int:
        return self.times.size - 1

    def u_mean(self) -> np.ndarray:
        """Posterior mean of u, shape (K + 1, L, n)."""
        block = self.means[:, self.layout.u(0)]
        full = block @ self.embedding.T + self.offsets
        return full.reshape(self.times.size, self.num_fields, self.grid.size)

    def u_cov(self, k: int, scaled: bool = True) -> np.ndarray:
        """Covariance of u at time index k over all fields and points."""
        u = self.layout.u(0)
        cov = self.embedding @ self.covs[k][u, u] @ self.embedding.T
        return self.gamma_sq * cov if scaled else cov

    def u_std(self) -> np.ndarray:
        var = np.stack([np.diag(self.u_cov(k)) for k in range(self.times.size)])
        return np.sqrt(np.clip(var, 0.0, None)).reshape(
            self.times.size, self.num_fields, self.grid.size
        )

    def to_frame(self) -> pd.DataFrame:
        mean = self.u_mean()
        std = self.u_std()
        K1, L, n = mean.shape
        t, f, x = np.meshgrid(self.times, np.arange(L), self.grid.points[:, 0], indexing="ij")
        return pd.DataFrame(
            {
                "t": t.ravel(),
                "x": x.ravel(),
                "field": f.ravel(),
                "mean": mean.ravel(),
                "std": std.ravel(),
            }
        )

    @property
    def metadata(self) -> dict:
        return {
            "variant": self.variant.value,
            "marginals": self.marginals,
            "state_dim": self.state_dim,
            "num_steps": self.num_steps,
            "gamma_sq": self.gamma_sq,
        }


def _boundary_normal_signs(grid: Grid, domain: tuple[float, float]) -> np.ndarray:
    if grid.dimension != 1:
        raise UnsupportedOperatorError("boundary normals are only implemented in 1-D")
    x_b = grid.points[grid.boundary_indices, 0]
    return np.where(x_b < 0.5 * (domain[0] + domain[1]), -1.0, 1.0)


def _build_grid(p: PdeProblem, cfg: SolverConfig) -> Grid:
    grid = equispaced_grid(cfg.dx, p.domain)
    if grid.size < 3:
        raise ConfigError(f"dx={cfg.dx} gives {grid.size} grid points, need at least 3")
    return grid


def boundary_rows(
    p: PdeProblem, cfg: SolverConfig, grid: Grid
) -> tuple[np.ndarray, np.ndarray]:
    """(B, R) restricted to boundary rows for one field, outward normals applied."""
    bidx = grid.boundary_indices
    if p.boundary_kind is BoundaryKind.DIRICHLET:
        B = np.eye(grid.size)[bidx]
        return B, np.zeros((bidx.size, bidx.size))
    # derivative along +x, then sign flip to the outward normal
    approx = collocate_boundary(
        cfg.kernel, DiffOperator.directional((1.0,)), grid, radius=cfg.stencil_radius
    )
    B, R = approx.restrict(bidx)
    signs = _boundary_normal_signs(grid, p.domain)
    return signs[:, None] * B, np.outer(signs, signs) * R


def build_state_space(p: PdeProblem, cfg: SolverConfig) -> StateSpaceModel:
    """Assemble prior and observation model for `cfg.variant`."""
    if cfg.variant is SolverVariant.MOL:
        return _build_mol_state_space(p, cfg)

    grid = _build_grid(p, cfg)
    L, n = p.num_fields, grid.size
    q = L * n
    approx: OperatorApprox = collocate(cfg.kernel, p.spatial_operator, grid, cfg.stencil_radius)
    D, E = approx.block_diag(L)
    M_u = np.kron(
        np.eye(L), floor_spectrum(gram(cfg.kernel, grid.points, grid.points), cfg.gram_floor)
    )

    B, R = boundary_rows(p, cfg, grid)
    B_full = np.kron(np.eye(L), B)
    R_full = np.kron(np.eye(L), R)
    x_b = grid.points[grid.boundary_indices]
    q_b = B_full.shape[0]

    latent = cfg.variant is SolverVariant.LATENT
    layout = StateLayout(cfg.nu, q, q if latent else 0, q_b if latent else 0)
    sde = iwp_sde(cfg.nu)
    times = time_grid(p.t_span, cfg.dt)
    base = discretize_steps(sde, times)
    lifted: dict[int, DiscreteTransition] = {}
    if latent:
        for tr in base:
            if id(tr) not in lifted:
                lifted[id(tr)] = stack_transitions(
                    kron_lift(tr, M_u), kron_lift(tr, E), kron_lift(tr, R_full)
                )
        transitions = [lifted[id(tr)] for tr in base]
        prior = stack_beliefs(
            lift_initial(sde, M_u), lift_initial(sde, E), lift_initial(sde, R_full)
        )
    else:
        for tr in base:
            if id(tr) not in lifted:
                lifted[id(tr)] = kron_lift(tr, M_u)
        transitions = [lifted[id(tr)] for tr in base]
        prior = lift_initial(sde, M_u)

    def observe(t: float, predicted: GaussianBelief) -> LinearizedObservation:
        eta = predicted.mean
        eta_xi = eta[layout.xi(0)] if latent else np.zeros(q)
        interior = linearize(p, t, eta[layout.u(0)], eta_xi, D, layout, E=None if latent else E)
        H_b = np.zeros((q_b, layout.dim))
        H_b[:, layout.u(0)] = B_full
        if latent:
            H_b[:, layout.theta(0)] = -np.eye(q_b)
            noise = np.zeros((q_b, q_b))
        else:
            noise = R_full
        g = np.asarray(p.boundary_values(t, x_b), dtype=float)
        bnd = LinearizedObservation(H_b, -g, noise)
        return LinearizedObservation.stack(interior, bnd)

    return StateSpaceModel(
        problem=p,
        config=cfg,
        grid=grid,
        layout=layout,
        times=times,
        prior=prior,
        transitions=transitions,
        observe=observe,
        D=D,
        E=E,
        initial_values=np.asarray(p.initial_values(grid.points), dtype=float),
        embedding=np.eye(q),
        offsets=np.zeros((times.size, q)),
    )


@dataclass(frozen=True, eq=False)
class EliminatedSystem:
    """Interior-point ODE after substituting the boundary conditions.

    U_full = P u + c(t); F is evaluated on the full grid and restricted to
    interior rows, which is exact for pointwise vector fields.
    """

    problem: PdeProblem
    embedding: np.ndarray
    offset: Callable[[float], np.ndarray]
    rows: np.ndarray

    def _full(self, t, u, du):
        U = self.embedding @ u + self.offset(t)
        DU = np.zeros(U.size)
        DU[self.rows] = du
        return U, DU

    def vector_field(self, t, u, du):
        U, DU = self._full(t, u, du)
        return np.asarray(self.problem.vector_field(t, U, DU))[self.rows]

    def jacobian_u(self, t, u, du):
        U, DU = self._full(t, u, du)
        return (np.asarray(self.problem.jacobian_u(t, U, DU)) @ self.embedding)[self.rows]

    def jacobian_du(self, t, u, du):
        U, DU = self._full(t, u, du)
        return np.asarray(self.problem.jacobian_du(t, U, DU))[np.ix_(self.rows, self.rows)]


def elimination(
    p: PdeProblem, grid: Grid
) -> tuple[np.ndarray, Callable[[float], np.ndarray]]:
    """(P, c) for one field: Dirichlet values are substituted, Neumann values copy
    the nearest interior neighbour plus lambda * g."""
    interior = grid.interior_indices
    bidx = grid.boundary_indices
    P = np.zeros((grid.size, interior.size))
    P[interior, np.arange(interior.size)] = 1.0
    x_b = grid.points[bidx]
    lam = np.zeros(bidx.size)
    if p.boundary_kind is BoundaryKind.NEUMANN:
        inner = grid.points[interior]
        dist = np.linalg.norm(x_b[:, None, :] - inner[None, :, :], axis=-1)
        nearest = np.argmin(dist, axis=1)
        P[bidx, nearest] = 1.0
        lam = dist[np.arange(bidx.size), nearest]
    L = p.num_fields

    def offset(t: float) -> np.ndarray:
        g = np.asarray(p.boundary_values(t, x_b), dtype=float).reshape(L, bidx.size)
        c = np.zeros((L, grid.size))
        c[:, bidx] = g if p.boundary_kind is BoundaryKind.DIRICHLET else lam * g
        return c.ravel()

    return np.kron(np.eye(L), P), offset


def _build_mol_state_space(p: PdeProblem, cfg: SolverConfig) -> StateSpaceModel:
    grid = _build_grid(p, cfg)
    L, n = p.num_fields, grid.size
    approx = collocate(cfg.kernel, p.spatial_operator, grid, cfg.stencil_radius)
    D_full, _ = approx.block_diag(L)
    P, offset = elimination(p, grid)
    rows = (grid.interior_indices[None, :] + n * np.arange(L)[:, None]).ravel()
    system = EliminatedSystem(p, P, offset, rows)
    D = (D_full @ P)[rows]
    q = rows.size

    layout = StateLayout(cfg.nu, q)
    sde = iwp_sde(cfg.nu)
    times = time_grid(p.t_span, cfg.dt)
    transitions = [kron_lift(tr, np.eye(q)) for tr in discretize_steps(sde, times)]
    prior = lift_initial(sde, np.eye(q))

    def observe(t: float, predicted: GaussianBelief) -> LinearizedObservation:
        du_offset = (D_full @ offset(t))[rows]
        return linearize(system, t, predicted.mean[layout.u(0)], du_offset, D, layout)

    h = np.asarray(p.initial_values(grid.points), dtype=float)
    return StateSpaceModel(
        problem=p,
        config=cfg,
        grid=grid,
        layout=layout,
        times=times,
        prior=prior,
        transitions=transitions,
        observe=observe,
        D=D,
        E=None,
        initial_values=h[rows],
        embedding=P,
        offsets=np.stack([offset(t) for t in times]),
    )


def condition_initial_values(model: StateSpaceModel) -> GaussianBelief:
    """Prior at t0 conditioned exactly on U(t0) = h."""
    return condition_on_coordinates(model.prior, model.layout.u(0), model.initial_values)


def initialize(
    p: PdeProblem, model: StateSpaceModel
) -> tuple[GaussianBelief, ResidualRecord]:
    """Belief at t0 after the initial values and the t0 residual are observed."""
    belief = condition_initial_values(model)
    t0 = float(model.times[0])
    return update(belief, model.observe(t0, belief), time=t0)


def _run(p: PdeProblem, cfg: SolverConfig) -> SolutionPosterior:
    model = build_state_space(p, cfg)
    logger.info(
        f"Solving {p.name} ({cfg.variant.value}): state dimension {model.layout.dim}, "
        f"{model.times.size - 1} steps, {model.grid.size} grid points"
    )
    belief, record = initialize(p, model)
    out = filter_and_smooth(belief, model.transitions, model.times, model.observe, [record])
    gamma_sq = calibrate(out.records) if cfg.calibrate else 1.0
    if cfg.calibrate:
        logger.info(f"Calibrated output scale: gamma^2 = {gamma_sq:.4e}")
    return SolutionPosterior(
        times=model.times,
        grid=model.grid,
        means=np.stack([b.mean for b in out.smoothed]),
        covs=np.stack([b.cov for b in out.smoothed]),
        gamma_sq=gamma_sq,
        layout=model.layout,
        num_fields=p.num_fields,
        variant=cfg.variant,
        embedding=model.embedding,
        offsets=model.offsets,
        records=out.records,
    )


def _require(cfg: SolverConfig, variant: SolverVariant):
    if cfg.variant is not variant:
        raise ConfigError(f"expected variant {variant.value}, got {cfg.variant.value}")


def solve_latent(p: PdeProblem, cfg: SolverConfig) -> SolutionPosterior:
    """PNMOL with the discretisation error as a latent force in the state."""
    _require(cfg, SolverVariant.LATENT)
    return _run(p, cfg)


def solve_white(p: PdeProblem, cfg: SolverConfig) -> SolutionPosterior:
    """PNMOL with the discretisation error as measurement noise."""
    _require(cfg, SolverVariant.WHITE)
    return _run(p, cfg)


def solve_mol_baseline(p: PdeProblem, cfg: SolverConfig) -> SolutionPosterior:
    """Classical MOL on interior points with a probabilistic ODE filter."""
    _require(cfg, SolverVariant.MOL)
    return _run(p, cfg)


SOLVERS = {
    SolverVariant.LATENT: solve_latent,
    SolverVariant.WHITE: solve_white,
    SolverVariant.MOL: solve_mol_baseline,
}


def solve(
    p: PdeProblem, cfg: SolverConfig, tracker: Optional[RuntimeTracker] = None
) -> SolutionPosterior:
    """Dispatch on `cfg.variant`; wall-clock time is added to `tracker`."""
    solver = SOLVERS[cfg.variant]
    if tracker is None:
        return solver(p, cfg)
    with tracker:
        return solver(p, cfg)
