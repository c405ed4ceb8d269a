"""
Integrated Wiener process priors and their discrete-time transitions.

A scalar-channel prior (A, B, m0, C0) is discretised once per step size and
lifted to q spatial channels with Kronecker products: the transition acts as
Phi kron I_q and the process noise as Sigma kron M for a spatial covariance M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .base import GaussianBelief
from .exceptions import ConfigError, DimensionMismatchError
from .utils import is_psd, symmetrize


@dataclass(frozen=True, eq=False)
class LtiSde:
    """dX = A X dt + B dW with X(t0) ~ N(m0, C0), for one channel."""

    drift: np.ndarray
    dispersion: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray
    num_derivatives: int

    def __post_init__(self):
        dim = self.num_derivatives + 1
        shapes = {
            "drift": (self.drift.shape, (dim, dim)),
            "dispersion": (self.dispersion.shape, (dim,)),
            "init_mean": (self.init_mean.shape, (dim,)),
            "init_cov": (self.init_cov.shape, (dim, dim)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise DimensionMismatchError(f"{name} has shape {got}, expected {want}")
        if not is_psd(self.init_cov):
            raise ConfigError("initial covariance must be symmetric PSD")

    @property
    def dim(self) -> int:
        return self.num_derivatives + 1


@dataclass(frozen=True, eq=False)
class DiscreteTransition:
    """x_{k+1} = Phi x_k + w_k, w_k ~ N(0, Sigma), over a step of length h."""

    transition: np.ndarray
    process_noise: np.ndarray
    step: float

    def __post_init__(self):
        if self.transition.shape != self.process_noise.shape:
            raise DimensionMismatchError(
                f"transition {self.transition.shape} and process noise "
                f"{self.process_noise.shape} differ in shape"
            )

    @property
    def dim(self) -> int:
        return self.transition.shape[0]


def iwp_sde(nu: int) -> LtiSde:
    """nu-times integrated Wiener process; state = (x, x', ..., x^(nu))."""
    if nu < 0:
        raise ConfigError(f"nu must be non-negative, got {nu}")
    dim = nu + 1
    drift = np.eye(dim, k=1)
    dispersion = np.zeros(dim)
    dispersion[-1] = 1.0
    return LtiSde(drift, dispersion, np.zeros(dim), np.eye(dim), nu)


def discretize_sde(sde: LtiSde, h: float) -> DiscreteTransition:
    """Exact discretisation by matrix fractions.

    expm([[A, B B^T], [0, -A^T]] h) = [[Phi, G], [0, Phi^{-T}]] and Sigma = G Phi^T.
    """
    if not h > 0:
        raise ConfigError(f"step must be positive, got {h}")
    dim = sde.dim
    block = np.zeros((2 * dim, 2 * dim))
    block[:dim, :dim] = sde.drift
    block[:dim, dim:] = np.outer(sde.dispersion, sde.dispersion)
    block[dim:, dim:] = -sde.drift.T
    fractions = scipy.linalg.expm(block * h)
    phi = fractions[:dim, :dim]
    sigma = symmetrize(fractions[:dim, dim:] @ phi.T)
    return DiscreteTransition(phi, sigma, float(h))


def iwp_process_noise(nu: int, h: float) -> np.ndarray:
    """Closed form Sigma[i, j] = h^(2nu+1-i-j) / ((2nu+1-i-j) (nu-i)! (nu-j)!)."""
    idx = np.arange(nu + 1)
    powers = 2 * nu + 1 - idx[:, None] - idx[None, :]
    facts = np.array([math.factorial(nu - i) for i in idx], dtype=float)
    return h**powers / (powers * np.outer(facts, facts))


def kron_lift(base: DiscreteTransition, M: np.ndarray) -> DiscreteTransition:
    """(Phi kron I_q, Sigma kron M) for a q x q spatial covariance M."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"spatial covariance must be square, got {M.shape}")
    q = M.shape[0]
    return DiscreteTransition(
        np.kron(base.transition, np.eye(q)),
        symmetrize(np.kron(base.process_noise, M)),
        base.step,
    )


def lift_initial(sde: LtiSde, M: np.ndarray) -> GaussianBelief:
    """N(m0 kron 1_q, C0 kron M)."""
    M = np.asarray(M, dtype=float)
    q = M.shape[0]
    return GaussianBelief(np.kron(sde.init_mean, np.ones(q)), np.kron(sde.init_cov, M))


def stack_transitions(*parts: DiscreteTransition) -> DiscreteTransition:
    """Block-diagonal transition of independent processes sharing one step."""
    steps = {p.step for p in parts}
    if len(steps) != 1:
        raise DimensionMismatchError(f"cannot stack transitions with steps {sorted(steps)}")
    return DiscreteTransition(
        scipy.linalg.block_diag(*(p.transition for p in parts)),
        scipy.linalg.block_diag(*(p.process_noise for p in parts)),
        steps.pop(),
    )


def stack_beliefs(*parts: GaussianBelief) -> GaussianBelief:
    return GaussianBelief(
        np.concatenate([p.mean for p in parts]),
        scipy.linalg.block_diag(*(p.cov for p in parts)),
    )


def time_grid(t_span: tuple[float, float], dt: float) -> np.ndarray:
    """t0, t0 + dt, ..., t_max; a final partial step is merged into the last step."""
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ConfigError(f"empty time span {t_span}")
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    num_steps = max(int(math.floor((t1 - t0) / dt + 1e-9)), 1)
    times = t0 + dt * np.arange(num_steps + 1)
    times[-1] = t1
    return times


def discretize_steps(sde: LtiSde, times: np.ndarray) -> list[DiscreteTransition]:
    """One scalar-channel transition per step, cached by step length."""
    cache: dict[float, DiscreteTransition] = {}
    transitions = []
    for h in np.diff(times):
        key = round(float(h), 14)
        if key not in cache:
            cache[key] = discretize_sde(sde, float(h))
        transitions.append(cache[key])
    return transitions
