"""
pnmol command line: discretize, solve and bench subcommands.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np
from ascii_colors import ASCIIColors

from ..base import SolverConfig
from ..bench import sweep, write_metrics_csv
from ..discretize import collocate, equispaced_grid
from ..exceptions import ConfigError, PnmolError
from ..kernels import DiffOperator, Kernel
from ..problems import get_problem
from ..solver import solve
from ..utils import RuntimeTracker, logger, set_verbose_debug, setup_logger
from .config import parse_args
from .utils_cli import display_splash_screen


def kernel_from_args(args: argparse.Namespace) -> Kernel:
    if args.kernel == "polynomial":
        return Kernel.polynomial(degree=args.degree)
    return Kernel.squared_exponential(input_scale=args.input_scale)


def run_discretize(args: argparse.Namespace) -> None:
    if args.grid_n < 3:
        raise ConfigError(f"--grid-n must be at least 3, got {args.grid_n}")
    grid = equispaced_grid(1.0 / (args.grid_n - 1))
    op = {
        "identity": DiffOperator.identity(),
        "laplacian": DiffOperator.laplacian(),
        "directional": DiffOperator.directional((1.0,)),
    }[args.operator]
    approx = collocate(kernel_from_args(args), op, grid, args.radius)
    frame = approx.to_frame()
    frame.to_csv(args.out, index=False)
    logger.info(f"Wrote {len(frame)} entries of D and E to {args.out}")


def run_solve(args: argparse.Namespace) -> None:
    problem = get_problem(args.problem, **args.problem_overrides)
    cfg = SolverConfig(
        variant=args.variant,
        kernel=kernel_from_args(args),
        nu=args.nu,
        stencil_radius=args.radius,
        dx=args.dx,
        dt=args.dt,
        gram_floor=args.gram_floor,
        calibrate=not args.no_calibrate,
    )
    tracker = RuntimeTracker()
    post = solve(problem, cfg, tracker=tracker)
    frame = post.to_frame()
    frame.to_csv(args.out, index=False)
    ASCIIColors.green(f"✅ {tracker}")
    ASCIIColors.white(f"    gamma^2 = {post.gamma_sq:.4e}, state dimension {post.state_dim}")
    logger.info(f"Wrote {len(frame)} posterior rows to {args.out}")


def run_bench(args: argparse.Namespace) -> None:
    rows = sweep(
        args.problem,
        args.variants,
        args.dx,
        args.dt,
        nu=args.nu,
        seed=args.seed,
        ref_refine=args.ref_refine,
        kernel=kernel_from_args(args),
        stencil_radius=args.radius,
        max_parallel=args.max_parallel,
        gram_floor=args.gram_floor,
        overrides=args.problem_overrides,
    )
    write_metrics_csv(rows, args.out, include_runtime=not args.no_runtime)
    failed = [row for row in rows if row.error]
    if failed:
        ASCIIColors.yellow(f"⚠️  {len(failed)} of {len(rows)} runs failed, see the error column")


COMMANDS = {
    "discretize": run_discretize,
    "solve": run_solve,
    "bench": run_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except PnmolError as e:
        ASCIIColors.red(f"❌ {e}")
        return e.exit_code

    setup_logger(
        "pnmol",
        args.log_level,
        log_file_path=args.log_file,
        enable_file_logging=args.log_file is not None,
    )
    set_verbose_debug(args.verbose)
    if not args.quiet:
        display_splash_screen(args)

    try:
        COMMANDS[args.command](args)
    except PnmolError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except np.linalg.LinAlgError as e:
        logger.error(f"Linear algebra failure: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
