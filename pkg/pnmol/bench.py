"""
Error and calibration metrics against reference solutions, and parameter sweeps.
"""

from __future__ import annotations

import asyncio
import itertools
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from .base import SolverConfig, SolverVariant
from .exceptions import NumericalError, PnmolError
from .kernels import Kernel
from .problems import ReferenceSolution, get_problem, reference_solve
from .solver import SolutionPosterior, solve
from .types import MetricsRow
from .utils import (
    RuntimeTracker,
    always_get_an_event_loop,
    get_env_value,
    jittered_cho_factor,
    limit_async_func_call,
    logger,
)

Reference = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Standard deviations below this fraction of the largest one count as zero
ZERO_STD_RTOL = 1e-10


def _reference_values(post: SolutionPosterior, ref: Reference) -> np.ndarray:
    values = np.asarray(ref(post.times, post.grid.points), dtype=float)
    return values.reshape(post.times.size, post.num_fields, post.grid.size)


def rmse_relative(post: SolutionPosterior, ref: Reference) -> float:
    """RMS error over all (t, x, field) divided by the RMS of the reference."""
    truth = _reference_values(post, ref)
    error = np.sqrt(np.mean((post.u_mean() - truth) ** 2))
    scale = np.sqrt(np.mean(truth**2))
    if scale == 0.0:
        return 0.0 if error == 0.0 else float("inf")
    return float(error / scale)


def chi2_curve(post: SolutionPosterior, ref: Reference) -> tuple[np.ndarray, np.ndarray]:
    """Per-step normalised chi^2 for t_k > t0.

    Coordinates with zero posterior variance are observed exactly and left
    out; a step with no coordinates left gets nan.
    """
    truth = _reference_values(post, ref).reshape(post.times.size, -1)
    mean = post.u_mean().reshape(post.times.size, -1)
    values = np.full(post.num_steps, np.nan)
    for k in range(1, post.times.size):
        cov = post.u_cov(k)
        var = np.diag(cov)
        top = var.max(initial=0.0)
        keep = np.flatnonzero(var > ZERO_STD_RTOL**2 * top) if top > 0 else np.zeros(0, int)
        if keep.size == 0:
            continue
        e = (mean[k] - truth[k])[keep]
        factor, _ = jittered_cho_factor(
            cov[np.ix_(keep, keep)], error_cls=NumericalError, what=f"posterior covariance at step {k}"
        )
        values[k - 1] = float(e @ scipy.linalg.cho_solve(factor, e, check_finite=False)) / keep.size
    return post.times[1:], values


def chi2_normalized(post: SolutionPosterior, ref: Reference) -> float:
    """Mean of the per-step normalised chi^2; 1 means calibrated."""
    _, values = chi2_curve(post, ref)
    finite = values[np.isfinite(values)]
    return float(np.mean(finite)) if finite.size else float("nan")


def chi2_geomean(post: SolutionPosterior, ref: Reference) -> float:
    _, values = chi2_curve(post, ref)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return float("nan")
    if np.any(finite <= 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(finite))))


def error_uncertainty_ratio(post: SolutionPosterior, ref: Reference) -> np.ndarray:
    """|mean - ref| / std per (t, field, x); +inf where std is zero but the error is not."""
    error = np.abs(post.u_mean() - _reference_values(post, ref))
    std = post.u_std()
    zero = std <= ZERO_STD_RTOL * std.max(initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, np.inf, error / np.where(zero, 1.0, std))
    ratio[error == 0.0] = 0.0
    return ratio


def median_ratio(post: SolutionPosterior, ref: Reference) -> float:
    """Median error/uncertainty ratio over t_k > t0 and coordinates with nonzero std."""
    ratio = error_uncertainty_ratio(post, ref)[1:]
    std = post.u_std()[1:]
    keep = std > ZERO_STD_RTOL * std.max(initial=0.0)
    values = ratio[keep & np.isfinite(ratio)]
    return float(np.median(values)) if values.size else float("nan")


def evaluate_run(
    problem_name: str,
    post: SolutionPosterior,
    ref: Reference,
    cfg: SolverConfig,
    seed: int,
    runtime_seconds: float,
) -> MetricsRow:
    return MetricsRow(
        problem=problem_name,
        variant=cfg.variant.value,
        dx=cfg.dx,
        dt=cfg.dt,
        nu=cfg.nu,
        seed=seed,
        rmse_relative=rmse_relative(post, ref),
        chi2_normalized=chi2_normalized(post, ref),
        chi2_geomean=chi2_geomean(post, ref),
        error_uncertainty_ratio=median_ratio(post, ref),
        runtime_seconds=runtime_seconds,
        gamma_sq=post.gamma_sq,
        marginals=post.marginals,
    )


def _failed_row(problem_name: str, cfg: SolverConfig, seed: int, err: Exception) -> MetricsRow:
    return MetricsRow(
        problem=problem_name,
        variant=cfg.variant.value,
        dx=cfg.dx,
        dt=cfg.dt,
        nu=cfg.nu,
        seed=seed,
        error=f"{type(err).__name__}: {err}",
    )


def _run_one(
    problem_name: str,
    overrides: dict[str, Any],
    cfg: SolverConfig,
    ref: Optional[ReferenceSolution],
    ref_error: Optional[Exception],
    seed: int,
) -> MetricsRow:
    if ref_error is not None:
        return _failed_row(problem_name, cfg, seed, ref_error)
    tracker = RuntimeTracker()
    try:
        p = get_problem(problem_name, **overrides)
        post = solve(p, cfg, tracker=tracker)
        return evaluate_run(problem_name, post, ref, cfg, seed, tracker.total_seconds)
    except Exception as e:
        logger.warning(
            f"Run {cfg.variant.value} dx={cfg.dx} dt={cfg.dt} failed: {type(e).__name__}: {e}"
        )
        return _failed_row(problem_name, cfg, seed, e)


async def asweep(
    problem_name: str,
    variants: Sequence[str],
    dxs: Sequence[float],
    dts: Sequence[float],
    nu: int = 1,
    seed: int = 0,
    ref_refine: int = get_env_value("PNMOL_REF_REFINE", 10, int),
    kernel: Optional[Kernel] = None,
    stencil_radius: Optional[int] = 1,
    max_parallel: int = get_env_value("PNMOL_MAX_PARALLEL", 1, int),
    gram_floor: Optional[float] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> list[MetricsRow]:
    """Run every (dx, dt, variant) combination; rows come back in that order."""
    overrides = dict(overrides or {})
    problem = get_problem(problem_name, **overrides)

    references: dict[float, tuple[Optional[ReferenceSolution], Optional[Exception]]] = {}
    for dx in dxs:
        try:
            references[dx] = (reference_solve(problem, refinement=ref_refine, dx=dx), None)
        except PnmolError as e:
            logger.warning(f"Reference for dx={dx} failed: {e}")
            references[dx] = (None, e)

    configs = []
    for dx, dt, variant in itertools.product(dxs, dts, variants):
        cfg = SolverConfig(
            variant=SolverVariant(variant),
            kernel=kernel if kernel is not None else SolverConfig().kernel,
            nu=nu,
            stencil_radius=stencil_radius,
            dx=dx,
            dt=dt,
            **({} if gram_floor is None else {"gram_floor": gram_floor}),
        )
        configs.append(cfg)

    @limit_async_func_call(max(1, max_parallel))
    async def run_config(index: int, cfg: SolverConfig) -> MetricsRow:
        ref, ref_error = references[cfg.dx]
        row = await asyncio.to_thread(
            _run_one, problem_name, overrides, cfg, ref, ref_error, seed
        )
        logger.info(f"Sweep {index + 1}/{len(configs)} done: {cfg.variant.value} dx={cfg.dx} dt={cfg.dt}")
        return row

    return list(await asyncio.gather(*(run_config(i, cfg) for i, cfg in enumerate(configs))))


def sweep(*args: Any, **kwargs: Any) -> list[MetricsRow]:
    """Synchronous wrapper of `asweep`."""
    loop = always_get_an_event_loop()
    return loop.run_until_complete(asweep(*args, **kwargs))


def metrics_frame(rows: Iterable[MetricsRow], include_runtime: bool = True) -> pd.DataFrame:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=list(MetricsRow.model_fields))
    if not include_runtime:
        frame = frame.drop(columns=["runtime_seconds"])
    return frame


def write_metrics_csv(
    rows: Iterable[MetricsRow], path: str, include_runtime: bool = True
) -> pd.DataFrame:
    """Write rows as CSV; inf and nan are written as the strings "inf" and "nan"."""
    frame = metrics_frame(rows, include_runtime=include_runtime)
    frame.to_csv(path, index=False, na_rep="nan")
    logger.info(f"Wrote {len(frame)} metric rows to {path}")
    return frame
