from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Optional, Union

import numpy as np

from .exceptions import ConfigError, DimensionMismatchError
from .kernels import DiffOperator, Kernel
from .utils import get_env_value, symmetrize


class BoundaryKind(str, Enum):
    """Boundary condition type"""

    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class SolverVariant(str, Enum):
    """Solver variants"""

    LATENT = "latent"
    WHITE = "white"
    MOL = "mol"


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Gaussian with an unscaled covariance; the true covariance is gamma^2 * cov."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"belief covariance {cov.shape} does not match mean of length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def marginal(self, index) -> "GaussianBelief":
        """Marginal over a slice or an integer index array."""
        idx = np.arange(self.dim)[index]
        return GaussianBelief(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov)))


@dataclass(frozen=True)
class StateLayout:
    """Index map of the stacked state [U-block, xi-block, theta-block].

    Each block is derivative-major: derivative j of a block with q channels
    occupies q consecutive entries, fields are ordered field-major inside.
    """

    nu: int
    """Number of derivatives carried per channel."""

    q_u: int
    """Channels in the U block (num_fields * num_points)."""

    q_xi: int = 0
    """Channels in the xi block (0 when xi is not part of the state)."""

    q_theta: int = 0
    """Channels in the boundary latent force block."""

    @property
    def dim(self) -> int:
        return (self.nu + 1) * (self.q_u + self.q_xi + self.q_theta)

    @property
    def xi_offset(self) -> int:
        return (self.nu + 1) * self.q_u

    @property
    def theta_offset(self) -> int:
        return self.xi_offset + (self.nu + 1) * self.q_xi

    def u(self, derivative: int = 0) -> slice:
        return self._block(0, self.q_u, derivative)

    def xi(self, derivative: int = 0) -> slice:
        return self._block(self.xi_offset, self.q_xi, derivative)

    def theta(self, derivative: int = 0) -> slice:
        return self._block(self.theta_offset, self.q_theta, derivative)

    def _block(self, offset: int, q: int, derivative: int) -> slice:
        if not 0 <= derivative <= self.nu:
            raise DimensionMismatchError(
                f"derivative {derivative} outside 0..{self.nu}"
            )
        start = offset + derivative * q
        return slice(start, start + q)


@dataclass(frozen=True)
class PdeProblem(ABC):
    """du/dt = F(t, x, u, Du) on a 1-D box with boundary condition B u = g.

    Values of all fields are stacked field-major: for L fields on n points the
    vectors have length L * n, field l at [l * n, (l + 1) * n).
    """

    name: str = ""
    num_fields: int = 1
    boundary_kind: BoundaryKind = BoundaryKind.DIRICHLET
    t_span: tuple[float, float] = (0.0, 1.0)
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "boundary_kind", BoundaryKind(self.boundary_kind))
        object.__setattr__(self, "t_span", tuple(float(v) for v in self.t_span))
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))

    @property
    def spatial_operator(self) -> DiffOperator:
        return DiffOperator.laplacian()

    @abstractmethod
    def vector_field(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        """F(t, u, Du) evaluated pointwise, shape (L * n,)."""

    @abstractmethod
    def jacobian_u(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        """dF/du, shape (L * n, L * n)."""

    @abstractmethod
    def jacobian_du(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        """dF/d(Du), shape (L * n, L * n)."""

    @abstractmethod
    def initial_values(self, x: np.ndarray) -> np.ndarray:
        """h(x) for points x of shape (n, d), stacked to (L * n,)."""

    def boundary_values(self, t: float, x: np.ndarray) -> np.ndarray:
        """g(t, x) on boundary points, stacked to (L * n_B,). Homogeneous by default."""
        return np.zeros(self.num_fields * np.asarray(x).shape[0])

    def boundary_operator(self, normal: Optional[np.ndarray] = None) -> DiffOperator:
        if self.boundary_kind is BoundaryKind.DIRICHLET:
            return DiffOperator.identity()
        return DiffOperator.directional((1.0,) if normal is None else normal)

    def with_overrides(self, **overrides: Any) -> "PdeProblem":
        """Copy with parameters replaced; string values are parsed to the parameter type."""
        names = {f.name for f in fields(self)}
        changes = {}
        for key, value in overrides.items():
            if key not in names:
                raise ConfigError(f"problem {self.name!r} has no parameter {key!r}")
            changes[key] = _coerce(getattr(self, key), value)
        return replace(self, **changes)

    def _split(self, values: np.ndarray) -> list[np.ndarray]:
        values = np.asarray(values, dtype=float)
        if values.size % self.num_fields:
            raise DimensionMismatchError(
                f"{self.name}: {values.size} values do not split into {self.num_fields} fields"
            )
        return np.split(values, self.num_fields)


def _coerce(current: Any, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        if isinstance(current, Enum):
            return type(current)(value.lower())
        if isinstance(current, bool):
            return value.lower() in ("1", "true", "yes", "on")
        if isinstance(current, (int, float)):
            return type(current)(value)
        if isinstance(current, tuple):
            return tuple(float(v) for v in value.strip("()").split(","))
    except ValueError as e:
        raise ConfigError(f"cannot parse {value!r}: {e}") from e
    return value


def _stencil_radius_from_env() -> Optional[int]:
    raw = get_env_value("PNMOL_STENCIL_RADIUS", "1").strip().lower()
    return None if raw == "global" else get_env_value("PNMOL_STENCIL_RADIUS", 1, int)


@dataclass
class SolverConfig:
    """Configuration of one PNMOL or MOL solve."""

    variant: SolverVariant = SolverVariant.LATENT
    """Which information model to run: latent, white or mol."""

    kernel: Kernel = field(
        default_factory=lambda: Kernel.squared_exponential(
            get_env_value("PNMOL_INPUT_SCALE", 0.25, float)
        )
    )
    """Spatial covariance kernel."""

    nu: int = field(default_factory=lambda: get_env_value("PNMOL_NU", 1, int))
    """Order of the integrated Wiener process prior in time."""

    stencil_radius: Optional[int] = field(default_factory=_stencil_radius_from_env)
    """Stencil radius for localised collocation; None means global collocation."""

    dx: float = field(default_factory=lambda: get_env_value("PNMOL_DX", 0.2, float))
    """Spatial grid spacing."""

    dt: float = field(default_factory=lambda: get_env_value("PNMOL_DT", 0.01, float))
    """Time step."""

    calibrate: bool = True
    """Estimate the output scale after the forward pass."""

    gram_floor: float = field(
        default_factory=lambda: get_env_value("PNMOL_GRAM_FLOOR", 1e-4, float)
    )
    """Relative eigenvalue floor of the spatial Gram matrix in the solution prior; 0 keeps it exact."""

    def __post_init__(self):
        self.variant = SolverVariant(self.variant)
        if isinstance(self.stencil_radius, str):
            self.stencil_radius = (
                None
                if self.stencil_radius.lower() == "global"
                else int(self.stencil_radius)
            )
        if self.nu not in (1, 2):
            raise ConfigError(f"nu must be 1 or 2, got {self.nu}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.dx > 0:
            raise ConfigError(f"dx must be positive, got {self.dx}")
        if not 0.0 <= self.gram_floor < 1.0:
            raise ConfigError(f"gram_floor must lie in [0, 1), got {self.gram_floor}")
        if self.stencil_radius is not None and self.stencil_radius < 1:
            raise ConfigError(
                f"stencil radius must be >= 1 or 'global', got {self.stencil_radius}"
            )

    @property
    def radius_label(self) -> Union[int, str]:
        return "global" if self.stencil_radius is None else self.stencil_radius
