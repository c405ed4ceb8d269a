"""
Covariance kernels and closed-form differential operators applied to them.

Kernels are value objects; the output scale is not part of a kernel; it is
applied at read-out (see `pnmol.inference.calibrate`). All evaluations
broadcast over point arrays of shape (..., d).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import prod
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigError, DimensionMismatchError, UnsupportedOperatorError

KernelFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class KernelFamily(str, Enum):
    """Supported kernel families"""

    SQUARED_EXPONENTIAL = "se"
    POLYNOMIAL = "polynomial"


class OperatorKind(str, Enum):
    """Supported linear differential operators"""

    IDENTITY = "identity"
    LAPLACIAN = "laplacian"
    DIRECTIONAL_DERIVATIVE = "directional"


@dataclass(frozen=True)
class Kernel:
    """Covariance kernel k(x, y) on R^d."""

    family: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL
    """Kernel family."""

    input_scale: float = 0.25
    """r in exp(-r^2 |x - y|^2); squared exponential only."""

    degree: int = 2
    """p in (1 + x^T y)^p; polynomial only."""

    dimension: int = 1
    """Spatial dimension d."""

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.dimension < 1:
            raise ConfigError(f"kernel dimension must be positive, got {self.dimension}")
        if self.family is KernelFamily.SQUARED_EXPONENTIAL and not self.input_scale > 0:
            raise ConfigError(f"input scale must be positive, got {self.input_scale}")
        if self.family is KernelFamily.POLYNOMIAL and self.degree < 0:
            raise ConfigError(f"polynomial degree must be non-negative, got {self.degree}")

    @classmethod
    def squared_exponential(cls, input_scale: float = 0.25, dimension: int = 1) -> "Kernel":
        return cls(KernelFamily.SQUARED_EXPONENTIAL, input_scale=input_scale, dimension=dimension)

    @classmethod
    def polynomial(cls, degree: int = 2, dimension: int = 1) -> "Kernel":
        return cls(KernelFamily.POLYNOMIAL, degree=degree, dimension=dimension)

    @property
    def feature_dimension(self) -> Optional[int]:
        """Rank bound of the Gram matrix ((p+d) choose d) for polynomial kernels, else None."""
        if self.family is KernelFamily.POLYNOMIAL:
            return _binomial(self.degree + self.dimension, self.dimension)
        return None

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return OperatorKernel(self, DiffOperator.identity(), DiffOperator.identity())(x, y)


@dataclass(frozen=True)
class DiffOperator:
    """Linear differential operator acting on one kernel argument."""

    kind: OperatorKind = OperatorKind.IDENTITY
    direction: Optional[tuple[float, ...]] = None
    """Unit direction for DirectionalDerivative; None otherwise."""

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if self.kind is OperatorKind.DIRECTIONAL_DERIVATIVE:
            if self.direction is None:
                raise ConfigError("directional derivative needs a direction")
            direction = tuple(float(v) for v in np.atleast_1d(self.direction))
            if not np.isclose(np.linalg.norm(direction), 1.0, rtol=0.0, atol=1e-12):
                raise ConfigError(f"direction {direction} does not have unit norm")
            object.__setattr__(self, "direction", direction)
        elif self.direction is not None:
            raise ConfigError(f"{self.kind.value} operator takes no direction")

    @classmethod
    def identity(cls) -> "DiffOperator":
        return cls(OperatorKind.IDENTITY)

    @classmethod
    def laplacian(cls) -> "DiffOperator":
        return cls(OperatorKind.LAPLACIAN)

    @classmethod
    def directional(cls, direction) -> "DiffOperator":
        return cls(OperatorKind.DIRECTIONAL_DERIVATIVE, direction=tuple(np.atleast_1d(direction)))

    @property
    def is_identity(self) -> bool:
        return self.kind is OperatorKind.IDENTITY


@dataclass(frozen=True)
class OperatorKernel:
    """(L_left k L_right*)(x, y): `left` acts on x, `right` on y."""

    kernel: Kernel
    left: DiffOperator
    right: DiffOperator

    def __post_init__(self):
        key = (self.kernel.family, self.left.kind, self.right.kind)
        if key not in _CLOSED_FORMS:
            raise UnsupportedOperatorError(
                f"no closed form for {self.left.kind.value} x {self.right.kind.value} "
                f"applied to a {self.kernel.family.value} kernel"
            )
        if self.left.direction is not None and self.right.direction is not None:
            if self.left.direction != self.right.direction:
                raise UnsupportedOperatorError("mixed derivative directions are not supported")
        for op in (self.left, self.right):
            if op.direction is not None and len(op.direction) != self.kernel.dimension:
                raise DimensionMismatchError(
                    f"direction {op.direction} does not match kernel dimension {self.kernel.dimension}"
                )

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.kernel.dimension
        if x.shape[-1:] != (d,) or y.shape[-1:] != (d,):
            raise DimensionMismatchError(
                f"points of shape {x.shape} and {y.shape} do not match kernel dimension {d}"
            )
        direction = self.left.direction or self.right.direction
        n = None if direction is None else np.asarray(direction)
        form = _CLOSED_FORMS[(self.kernel.family, self.left.kind, self.right.kind)]
        return form(self.kernel, x, y, n)


def evaluate(k: Kernel, x, y) -> float:
    """k(x, y) for two single points."""
    value = k(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float)))
    return float(value)


def gram(kfun: KernelFunction, X, Y) -> np.ndarray:
    """Matrix G[i, j] = kfun(X[i], Y[j]).

    1-D inputs are read as point sets on the real line.
    """
    X = _as_points(X)
    Y = _as_points(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(
            f"point sets have dimensions {X.shape[1]} and {Y.shape[1]}"
        )
    return np.asarray(kfun(X[:, None, :], Y[None, :, :]), dtype=float)


def apply_left(op: DiffOperator, k: Kernel) -> OperatorKernel:
    """z, z' -> (D_z k)(z, z')."""
    return OperatorKernel(k, op, DiffOperator.identity())


def apply_both(op: DiffOperator, k: Kernel) -> OperatorKernel:
    """z, z' -> (D_z D_z' k)(z, z')."""
    return OperatorKernel(k, op, op)


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X[:, None]
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a point set of shape (n, d), got {X.shape}")
    return X


def _binomial(n: int, k: int) -> int:
    return prod(range(n - k + 1, n + 1)) // prod(range(1, k + 1))


# Squared exponential: k = exp(-a s), a = r^2, s = |x - y|^2.


def _se_base(k: Kernel, x, y):
    diff = x - y
    sq = np.sum(diff**2, axis=-1)
    a = k.input_scale**2
    return diff, sq, a, np.exp(-a * sq)


def _se_identity(k, x, y, n):
    return _se_base(k, x, y)[3]


def _se_laplacian_left(k, x, y, n):
    _, sq, a, base = _se_base(k, x, y)
    d = k.dimension
    return (4.0 * a**2 * sq - 2.0 * d * a) * base


def _se_laplacian_both(k, x, y, n):
    _, sq, a, base = _se_base(k, x, y)
    d = k.dimension
    return (
        16.0 * a**4 * sq**2 - (32.0 + 16.0 * d) * a**3 * sq + 4.0 * d * (d + 2.0) * a**2
    ) * base


def _se_directional_left(k, x, y, n):
    diff, _, a, base = _se_base(k, x, y)
    return -2.0 * a * (diff @ n) * base


def _se_directional_both(k, x, y, n):
    diff, _, a, base = _se_base(k, x, y)
    return 2.0 * a * (1.0 - 2.0 * a * (diff @ n) ** 2) * base


# Polynomial: k = c^p, c = 1 + x^T y. Derivatives are falling factorials of p.


def _falling(k: Kernel, c, j: int):
    p = k.degree
    if p < j:
        return np.zeros_like(c)
    return float(prod(range(p - j + 1, p + 1))) * c ** (p - j)


def _poly_c(x, y):
    return 1.0 + np.sum(x * y, axis=-1)


def _poly_identity(k, x, y, n):
    return _falling(k, _poly_c(x, y), 0)


def _poly_laplacian_left(k, x, y, n):
    c = _poly_c(x, y)
    return _falling(k, c, 2) * np.sum(y * y, axis=-1) * np.ones_like(c)


def _poly_laplacian_both(k, x, y, n):
    c = _poly_c(x, y)
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    xy = c - 1.0
    return (
        _falling(k, c, 4) * xx * yy
        + 4.0 * _falling(k, c, 3) * xy
        + 2.0 * k.dimension * _falling(k, c, 2)
    )


def _poly_directional_left(k, x, y, n):
    c = _poly_c(x, y)
    return _falling(k, c, 1) * (y @ n) * np.ones_like(c)


def _poly_directional_both(k, x, y, n):
    c = _poly_c(x, y)
    return _falling(k, c, 2) * (x @ n) * (y @ n) + _falling(k, c, 1)


_SE = KernelFamily.SQUARED_EXPONENTIAL
_POLY = KernelFamily.POLYNOMIAL
_I = OperatorKind.IDENTITY
_LAP = OperatorKind.LAPLACIAN
_DIR = OperatorKind.DIRECTIONAL_DERIVATIVE

_CLOSED_FORMS = {
    (_SE, _I, _I): _se_identity,
    (_SE, _LAP, _I): _se_laplacian_left,
    (_SE, _LAP, _LAP): _se_laplacian_both,
    (_SE, _DIR, _I): _se_directional_left,
    (_SE, _DIR, _DIR): _se_directional_both,
    (_POLY, _I, _I): _poly_identity,
    (_POLY, _LAP, _I): _poly_laplacian_left,
    (_POLY, _LAP, _LAP): _poly_laplacian_both,
    (_POLY, _DIR, _I): _poly_directional_left,
    (_POLY, _DIR, _DIR): _poly_directional_both,
}
