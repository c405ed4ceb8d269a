from __future__ import annotations

from dataclasses import dataclass
from typing import Any, final

import numpy as np

from ..base import BoundaryKind, PdeProblem


@final
@dataclass(frozen=True)
class SirProblem(PdeProblem):
    """Susceptible-infected-recovered model with diffusion in all compartments."""

    name: str = "sir"
    num_fields: int = 3
    boundary_kind: BoundaryKind = BoundaryKind.NEUMANN
    beta: float = 3.0
    recovery_rate: float = 1.0
    diffusion: float = 0.05
    infection_amplitude: float = 0.1

    def vector_field(self, t, u, du):
        s, i, _ = self._split(u)
        ds, di, dr = self._split(du)
        infections = self.beta * s * i
        recoveries = self.recovery_rate * i
        return np.concatenate(
            [
                -infections + self.diffusion * ds,
                infections - recoveries + self.diffusion * di,
                recoveries + self.diffusion * dr,
            ]
        )

    def jacobian_u(self, t, u, du):
        s, i, _ = self._split(u)
        zero = np.zeros((len(s), len(s)))
        return np.block(
            [
                [np.diag(-self.beta * i), np.diag(-self.beta * s), zero],
                [np.diag(self.beta * i), np.diag(self.beta * s - self.recovery_rate), zero],
                [zero, np.diag(np.full(len(s), self.recovery_rate)), zero],
            ]
        )

    def jacobian_du(self, t, u, du):
        return self.diffusion * np.eye(len(u))

    def initial_values(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        infected = self.infection_amplitude * np.exp(-((x - 0.5) ** 2) / 0.01)
        return np.concatenate([1.0 - infected, infected, np.zeros_like(x)])


def sir_spatial(**overrides: Any) -> SirProblem:
    return SirProblem().with_overrides(**overrides)
