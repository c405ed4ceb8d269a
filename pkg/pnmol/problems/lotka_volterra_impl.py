from __future__ import annotations

from dataclasses import dataclass
from typing import Any, final

import numpy as np

from ..base import BoundaryKind, PdeProblem


@final
@dataclass(frozen=True)
class LotkaVolterraProblem(PdeProblem):
    """Predator-prey reaction-diffusion system.

    du/dt = a u - b u v + delta_u Laplacian(u)
    dv/dt = -c v + e u v + delta_v Laplacian(v)
    """

    name: str = "lotka-volterra"
    num_fields: int = 2
    boundary_kind: BoundaryKind = BoundaryKind.NEUMANN
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    e: float = 1.0
    delta_u: float = 0.1
    delta_v: float = 0.1
    bump_amplitude: float = 0.5
    """Height of the initial prey/predator bumps on top of the constant state 1."""

    def vector_field(self, t, u, du):
        prey, predator = self._split(u)
        du_prey, du_predator = self._split(du)
        return np.concatenate(
            [
                self.a * prey - self.b * prey * predator + self.delta_u * du_prey,
                -self.c * predator + self.e * prey * predator + self.delta_v * du_predator,
            ]
        )

    def jacobian_u(self, t, u, du):
        prey, predator = self._split(u)
        return np.block(
            [
                [np.diag(self.a - self.b * predator), np.diag(-self.b * prey)],
                [np.diag(self.e * predator), np.diag(-self.c + self.e * prey)],
            ]
        )

    def jacobian_du(self, t, u, du):
        n = len(u) // 2
        return np.diag(np.repeat([self.delta_u, self.delta_v], n))

    def initial_values(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        prey = 1.0 + self.bump_amplitude * np.exp(-((x - 0.3) ** 2) / 0.02)
        predator = 1.0 + self.bump_amplitude * np.exp(-((x - 0.7) ** 2) / 0.02)
        return np.concatenate([prey, predator])


def lotka_volterra_spatial(**overrides: Any) -> LotkaVolterraProblem:
    return LotkaVolterraProblem().with_overrides(**overrides)
