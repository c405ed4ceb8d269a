"""
Gaussian filtering and smoothing with unscaled covariances.

All covariances carried here are unscaled: the model covariance is
gamma^2 times the stored matrix. Posterior means do not depend on gamma, so
one forward pass with gamma = 1 followed by `calibrate` is enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import scipy.linalg

from .base import GaussianBelief, StateLayout
from .exceptions import (
    DimensionMismatchError,
    NonFiniteStateError,
    NumericalError,
    SingularInnovationError,
)
from .statespace import DiscreteTransition
from .utils import jittered_cho_factor, logger, symmetrize, verbose_debug


class VectorField(Protocol):
    def vector_field(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray: ...

    def jacobian_u(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray: ...

    def jacobian_du(self, t: float, u: np.ndarray, du: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class LinearizedObservation:
    """Affine residual r = H x + b, observed as r = 0 under noise N(0, gamma^2 noise)."""

    H: np.ndarray
    b: np.ndarray
    noise: np.ndarray
    jac_u: Optional[np.ndarray] = None
    """H_U = dF/du + dF/d(Du) D, kept for inspection."""
    jac_xi: Optional[np.ndarray] = None
    """H_xi = dF/d(Du)."""

    def __post_init__(self):
        m = self.b.shape[0]
        if self.H.shape[0] != m or self.noise.shape != (m, m):
            raise DimensionMismatchError(
                f"observation shapes H {self.H.shape}, b {self.b.shape}, noise {self.noise.shape} disagree"
            )

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @classmethod
    def stack(cls, *parts: "LinearizedObservation") -> "LinearizedObservation":
        parts = tuple(p for p in parts if p.dim)
        if not parts:
            raise DimensionMismatchError("nothing to stack")
        return cls(
            np.vstack([p.H for p in parts]),
            np.concatenate([p.b for p in parts]),
            scipy.linalg.block_diag(*(p.noise for p in parts)),
        )


@dataclass(frozen=True, eq=False)
class ResidualRecord:
    """Innovation mean and unscaled innovation covariance of one update."""

    mean: np.ndarray
    cov: np.ndarray
    time: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class FilterOutput:
    filtered: list[GaussianBelief] = field(default_factory=list)
    smoothed: list[GaussianBelief] = field(default_factory=list)
    records: list[ResidualRecord] = field(default_factory=list)


def predict(belief: GaussianBelief, tr: DiscreteTransition) -> GaussianBelief:
    if tr.dim != belief.dim:
        raise DimensionMismatchError(
            f"transition of dimension {tr.dim} applied to belief of dimension {belief.dim}"
        )
    phi = tr.transition
    return GaussianBelief(phi @ belief.mean, phi @ belief.cov @ phi.T + tr.process_noise)


def linearize(
    F: VectorField,
    t: float,
    eta_u: np.ndarray,
    eta_xi: np.ndarray,
    D: np.ndarray,
    layout: StateLayout,
    E: Optional[np.ndarray] = None,
) -> LinearizedObservation:
    """First-order residual U' - F(t, U, D U + xi) around (eta_u, eta_xi).

    When xi is part of the state it enters H; otherwise xi - eta_xi is
    treated as zero-mean noise with covariance E (none if E is None).
    """
    eta_u = np.asarray(eta_u, dtype=float)
    eta_xi = np.asarray(eta_xi, dtype=float)
    q = layout.q_u
    if eta_u.shape != (q,) or eta_xi.shape != (q,) or D.shape != (q, q):
        raise DimensionMismatchError(
            f"linearization point {eta_u.shape}/{eta_xi.shape} and D {D.shape} do not match {q} channels"
        )
    du = D @ eta_u + eta_xi
    value = np.asarray(F.vector_field(t, eta_u, du), dtype=float)
    J_u = np.asarray(F.jacobian_u(t, eta_u, du), dtype=float)
    J_du = np.asarray(F.jacobian_du(t, eta_u, du), dtype=float)
    if value.shape != (q,) or J_u.shape != (q, q) or J_du.shape != (q, q):
        raise DimensionMismatchError(
            f"vector field returned {value.shape}, jacobians {J_u.shape} and {J_du.shape} for {q} channels"
        )

    H_u = J_u + J_du @ D
    H_xi = J_du
    H = np.zeros((q, layout.dim))
    H[:, layout.u(1)] = np.eye(q)
    H[:, layout.u(0)] = -H_u
    remainder = value - H_u @ eta_u
    if layout.q_xi:
        H[:, layout.xi(0)] = -H_xi
        remainder = remainder - H_xi @ eta_xi
        noise = np.zeros((q, q))
    elif E is not None:
        noise = symmetrize(H_xi @ E @ H_xi.T)
    else:
        noise = np.zeros((q, q))
    return LinearizedObservation(H, -remainder, noise, jac_u=H_u, jac_xi=H_xi)


def update(
    belief: GaussianBelief, obs: LinearizedObservation, time: float = 0.0
) -> tuple[GaussianBelief, ResidualRecord]:
    """Condition on H x + b = 0 under noise N(0, obs.noise)."""
    if obs.dim == 0:
        return belief, ResidualRecord(np.zeros(0), np.zeros((0, 0)), time)
    if obs.H.shape[1] != belief.dim:
        raise DimensionMismatchError(
            f"observation acts on dimension {obs.H.shape[1]}, belief has {belief.dim}"
        )
    H = obs.H
    innovation = H @ belief.mean + obs.b
    cross = belief.cov @ H.T
    S = symmetrize(H @ cross + obs.noise)
    factor, _ = jittered_cho_factor(
        S, error_cls=SingularInnovationError, what=f"innovation covariance at t={time:.4g}"
    )
    gain = scipy.linalg.cho_solve(factor, cross.T, check_finite=False).T
    mean = belief.mean - gain @ innovation
    cov = belief.cov - gain @ S @ gain.T
    verbose_debug("innovation at t=%.4g: %s", time, np.array2string(innovation, precision=3))
    return GaussianBelief(mean, cov), ResidualRecord(innovation, S, time)


def condition_on_coordinates(
    belief: GaussianBelief, indices, values: np.ndarray
) -> GaussianBelief:
    """Exact observation of state coordinates x[indices] = values.

    The observed coordinates end up with exactly `values` and zero variance.
    """
    idx = np.arange(belief.dim)[indices]
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape != idx.shape:
        raise DimensionMismatchError(f"{values.size} values for {idx.size} coordinates")
    S = belief.cov[np.ix_(idx, idx)]
    cross = belief.cov[:, idx]
    factor, _ = jittered_cho_factor(S, error_cls=SingularInnovationError, what="coordinate covariance")
    gain = scipy.linalg.cho_solve(factor, cross.T, check_finite=False).T
    mean = belief.mean + gain @ (values - belief.mean[idx])
    cov = belief.cov - gain @ cross.T
    mean[idx] = values
    cov[idx, :] = 0.0
    cov[:, idx] = 0.0
    return GaussianBelief(mean, cov)


def smooth(
    filtered: Sequence[GaussianBelief], transitions: Sequence[DiscreteTransition]
) -> list[GaussianBelief]:
    """Rauch-Tung-Striebel backward pass; transitions[k] maps step k to k + 1."""
    if len(transitions) != len(filtered) - 1:
        raise DimensionMismatchError(
            f"{len(transitions)} transitions for {len(filtered)} filtered beliefs"
        )
    smoothed = [filtered[-1]]
    for k in range(len(filtered) - 2, -1, -1):
        current, tr = filtered[k], transitions[k]
        predicted = predict(current, tr)
        factor, _ = jittered_cho_factor(
            predicted.cov, error_cls=NumericalError, what=f"predicted covariance at step {k + 1}"
        )
        gain = scipy.linalg.cho_solve(factor, tr.transition @ current.cov, check_finite=False).T
        later = smoothed[-1]
        mean = current.mean + gain @ (later.mean - predicted.mean)
        cov = current.cov + gain @ (later.cov - predicted.cov) @ gain.T
        smoothed.append(GaussianBelief(mean, cov))
    return smoothed[::-1]


def mahalanobis_terms(records: Sequence[ResidualRecord]) -> np.ndarray:
    """m^T S^{-1} m for every record."""
    terms = np.zeros(len(records))
    for i, record in enumerate(records):
        if record.dim == 0:
            continue
        factor, _ = jittered_cho_factor(
            record.cov, error_cls=SingularInnovationError, what=f"residual covariance at t={record.time:.4g}"
        )
        terms[i] = float(record.mean @ scipy.linalg.cho_solve(factor, record.mean, check_finite=False))
    return terms


def calibrate(
    records: Sequence[ResidualRecord],
    num_points: Optional[int] = None,
    num_steps: Optional[int] = None,
) -> float:
    """Quasi maximum likelihood estimate of gamma^2 from filter residuals.

    Normalised by the total residual dimension over all records, or by
    num_points * (num_steps + 1) when both are given.
    """
    terms = mahalanobis_terms(records)
    if num_points is not None and num_steps is not None:
        normalizer = num_points * (num_steps + 1)
    else:
        normalizer = sum(record.dim for record in records)
    if normalizer == 0:
        return 0.0
    return float(max(np.sum(terms), 0.0) / normalizer)


def filter_and_smooth(
    initial: GaussianBelief,
    transitions: Sequence[DiscreteTransition],
    times: Sequence[float],
    observe: Callable[[float, GaussianBelief], LinearizedObservation],
    initial_records: Sequence[ResidualRecord] = (),
) -> FilterOutput:
    """Extended Kalman filter over `times[1:]`, then RTS smoothing.

    `initial` is the belief at times[0], already conditioned on the data
    there. `observe(t, predicted)` builds the observation at time t.
    """
    if len(transitions) != len(times) - 1:
        raise DimensionMismatchError(f"{len(transitions)} transitions for {len(times)} times")
    out = FilterOutput(filtered=[initial], records=list(initial_records))
    belief = initial
    for k, tr in enumerate(transitions, start=1):
        t = float(times[k])
        predicted = predict(belief, tr)
        belief, record = update(predicted, observe(t, predicted), time=t)
        if not belief.is_finite():
            raise NonFiniteStateError(f"non-finite filter state at step {k} (t={t:.4g})")
        out.filtered.append(belief)
        out.records.append(record)
    logger.debug(f"forward pass done: {len(out.filtered)} beliefs, state dimension {initial.dim}")
    out.smoothed = smooth(out.filtered, transitions)
    return out
