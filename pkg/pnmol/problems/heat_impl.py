from __future__ import annotations

from dataclasses import dataclass
from typing import Any, final

import numpy as np

from ..base import BoundaryKind, PdeProblem
from ..exceptions import ConfigError

INITIAL_PROFILES = ("bump", "sine", "zero")


@final
@dataclass(frozen=True)
class HeatProblem(PdeProblem):
    """du/dt = alpha * Laplacian(u)."""

    name: str = "heat"
    alpha: float = 0.1
    initial_profile: str = "bump"
    """bump: exp(-(x - 0.5)^2 / 0.01); sine: sin(pi x); zero: u = 0."""

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha > 0:
            raise ConfigError(f"heat: alpha must be positive, got {self.alpha}")
        if self.initial_profile not in INITIAL_PROFILES:
            raise ConfigError(
                f"heat: initial_profile must be one of {INITIAL_PROFILES}, got {self.initial_profile!r}"
            )

    def vector_field(self, t, u, du):
        return self.alpha * np.asarray(du, dtype=float)

    def jacobian_u(self, t, u, du):
        return np.zeros((len(u), len(u)))

    def jacobian_du(self, t, u, du):
        return self.alpha * np.eye(len(u))

    def initial_values(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        if self.initial_profile == "bump":
            return np.exp(-((x - 0.5) ** 2) / 0.01)
        if self.initial_profile == "sine":
            a, b = self.domain
            return np.sin(np.pi * (x - a) / (b - a))
        return np.zeros_like(x)

    def exact_solution(self, t: float, x: np.ndarray) -> np.ndarray:
        """Separation of variables; only for the sine profile with Dirichlet data."""
        if self.initial_profile != "sine" or self.boundary_kind is not BoundaryKind.DIRICHLET:
            raise ConfigError("heat: closed form needs the sine profile with Dirichlet boundaries")
        a, b = self.domain
        decay = np.exp(-self.alpha * (np.pi / (b - a)) ** 2 * (t - self.t_span[0]))
        return decay * self.initial_values(x)


def heat_1d(**overrides: Any) -> HeatProblem:
    return HeatProblem().with_overrides(**overrides)
