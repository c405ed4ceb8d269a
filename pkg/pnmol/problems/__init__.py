from __future__ import annotations

from typing import Any

from ..base import PdeProblem
from ..exceptions import UnknownProblemError
from ..utils import lazy_external_import
from .reference import ReferenceSolution as ReferenceSolution, reference_solve as reference_solve

PROBLEMS = {
    "heat": (".heat_impl", "heat_1d"),
    "lotka-volterra": (".lotka_volterra_impl", "lotka_volterra_spatial"),
    "sir": (".sir_impl", "sir_spatial"),
}


def verify_problem_name(name: str) -> None:
    """Raise UnknownProblemError unless `name` is registered."""
    if name not in PROBLEMS:
        raise UnknownProblemError(
            f"Unknown problem {name!r}. Supported problems: {', '.join(sorted(PROBLEMS))}"
        )


def get_problem(name: str, **overrides: Any) -> PdeProblem:
    """Build a registered problem, applying parameter overrides."""
    verify_problem_name(name)
    module_name, factory_name = PROBLEMS[name]
    factory = lazy_external_import(module_name, factory_name, package=__package__)
    return factory(**overrides)


def heat_1d(**overrides: Any) -> PdeProblem:
    return get_problem("heat", **overrides)


def lotka_volterra_spatial(**overrides: Any) -> PdeProblem:
    return get_problem("lotka-volterra", **overrides)


def sir_spatial(**overrides: Any) -> PdeProblem:
    return get_problem("sir", **overrides)
