from __future__ import annotations

from typing import Literal


class PnmolError(Exception):
    """Base class for every error raised by pnmol."""

    exit_code: int = 1


class ConfigError(PnmolError, ValueError):
    """Raised when a configuration value or argument is invalid."""

    exit_code: Literal[1] = 1


class StencilRadiusError(ConfigError):
    """Raised when a stencil needs more points than the grid has."""


class UnknownProblemError(ConfigError):
    """Raised when a problem name is not registered."""


class DimensionMismatchError(PnmolError, ValueError):
    """Raised when array shapes are inconsistent."""

    exit_code: Literal[1] = 1


class UnsupportedOperatorError(PnmolError, NotImplementedError):
    """Raised when no closed form exists for an (operator, kernel) pair."""

    exit_code: Literal[1] = 1


class NumericalError(PnmolError):
    """Raised when a computation breaks down numerically."""

    exit_code: Literal[2] = 2  # pyright: ignore[reportIncompatibleVariableOverride]


class GramFactorizationError(NumericalError):
    """Kernel Gram matrix not factorisable after the jitter ladder."""


class SingularInnovationError(NumericalError):
    """Innovation covariance not factorisable (redundant observations)."""


class NegativeErrorVarianceError(NumericalError):
    """A localised error variance came out clearly negative."""


class ReferenceInstabilityError(NumericalError):
    """The reference integrator blew up; the step is too large."""


class NonFiniteStateError(NumericalError):
    """NaN or inf appeared in a filter mean or covariance."""
