"""
Configs for the pnmol command line.

Precedence: command-line flags, then the --config file, then environment
variables (.env included), then built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from typing import Any, Optional, Sequence

from ..exceptions import ConfigError
from ..problems import PROBLEMS
from ..utils import TRUTHY, get_env_value

CONFIG_SECTION = "pnmol"


def read_config_file(path: str) -> dict[str, str]:
    """Flat key=value file; '#' comments allowed, no section headers needed."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        parser.read_string(f"[{CONFIG_SECTION}]\n{text}", source=path)
    except configparser.Error as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return dict(parser.items(CONFIG_SECTION))


def radius_type(value: str) -> Optional[int]:
    if str(value).strip().lower() == "global":
        return None
    try:
        radius = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"radius must be an integer or 'global', got {value!r}")
    if radius < 1:
        raise argparse.ArgumentTypeError(f"radius must be >= 1, got {radius}")
    return radius


def float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {value!r}")


def str_list(value: str) -> list[str]:
    return [v.strip() for v in str(value).split(",") if v.strip()]


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--config",
        default=None,
        help="Flat key=value file with option defaults (flags override it)",
    )
    parser.add_argument(
        "--log-level",
        default=get_env_value("LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default: from env or INFO)",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        default=get_env_value("VERBOSE", False, bool),
        help="Log full matrices in DEBUG messages instead of truncating them",
    )
    parser.add_argument(
        "--log-file",
        default=get_env_value("PNMOL_LOG_FILE", None),
        help="Also log to this rotating file (default: from env, no file logging if unset)",
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        default=False,
        help="Do not print the splash screen",
    )


def _add_kernel(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--kernel",
        default=get_env_value("PNMOL_KERNEL", "se"),
        choices=["se", "polynomial"],
        help="Spatial kernel family (default: from env or se)",
    )
    parser.add_argument(
        "--input-scale",
        type=float,
        default=get_env_value("PNMOL_INPUT_SCALE", 0.25, float),
        help="Input scale r of the squared exponential kernel (default: from env or 0.25)",
    )
    parser.add_argument(
        "--degree",
        type=int,
        default=get_env_value("PNMOL_DEGREE", 2, int),
        help="Degree of the polynomial kernel (default: from env or 2)",
    )
    parser.add_argument(
        "--radius",
        type=radius_type,
        default=get_env_value("PNMOL_STENCIL_RADIUS", "1"),
        help="Stencil radius, or 'global' for global collocation (default: from env or 1)",
    )
    parser.add_argument(
        "--gram-floor",
        type=float,
        default=get_env_value("PNMOL_GRAM_FLOOR", 1e-4, float),
        help="Relative eigenvalue floor of the spatial prior Gram matrix, 0 disables (default: from env or 1e-4)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="pnmol",
        description="Probabilistic numerical method of lines: discretise, solve and benchmark PDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    disc = sub.add_parser("discretize", help="Write D and E of a kernel discretisation as CSV")
    _add_common(disc)
    _add_kernel(disc)
    disc.add_argument(
        "--operator",
        default="laplacian",
        choices=["identity", "laplacian", "directional"],
        help="Differential operator (directional means d/dx)",
    )
    disc.add_argument("--grid-n", type=int, default=25, help="Number of grid points on [0, 1]")
    disc.add_argument("--out", default="d_and_e.csv", help="Output CSV path")

    solve = sub.add_parser("solve", help="Solve one problem and write the posterior as CSV")
    _add_common(solve)
    _add_kernel(solve)
    solve.add_argument("--problem", default="heat", choices=sorted(PROBLEMS))
    solve.add_argument("--variant", default="latent", choices=["latent", "white", "mol"])
    solve.add_argument("--dx", type=float, default=get_env_value("PNMOL_DX", 0.2, float))
    solve.add_argument("--dt", type=float, default=get_env_value("PNMOL_DT", 0.01, float))
    solve.add_argument("--nu", type=int, default=get_env_value("PNMOL_NU", 1, int), choices=[1, 2])
    solve.add_argument(
        "--no-calibrate",
        action="store_true",
        default=False,
        help="Skip output-scale calibration",
    )
    solve.add_argument("--out", default="solution.csv", help="Output CSV path")

    bench = sub.add_parser("bench", help="Run a (variant, dx, dt) sweep and write metrics as CSV")
    _add_common(bench)
    _add_kernel(bench)
    bench.add_argument("--problem", default="heat", choices=sorted(PROBLEMS))
    bench.add_argument("--variants", type=str_list, default="latent,white,mol")
    bench.add_argument("--dx", type=float_list, default=str(get_env_value("PNMOL_DX", "0.2")))
    bench.add_argument("--dt", type=float_list, default=str(get_env_value("PNMOL_DT", "0.01")))
    bench.add_argument("--nu", type=int, default=get_env_value("PNMOL_NU", 1, int), choices=[1, 2])
    bench.add_argument(
        "--ref-refine",
        type=int,
        default=get_env_value("PNMOL_REF_REFINE", 10, int),
        help="Mesh refinement factor of the reference solution (default: from env or 10)",
    )
    bench.add_argument(
        "--max-parallel",
        type=int,
        default=get_env_value("PNMOL_MAX_PARALLEL", 1, int),
        help="Maximum number of concurrent solves (default: from env or 1)",
    )
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument(
        "--no-runtime",
        action="store_true",
        default=False,
        help="Omit the runtime column (byte-identical reruns)",
    )
    bench.add_argument("--out", default="metrics.csv", help="Output CSV path")

    parser.commands = {"discretize": disc, "solve": solve, "bench": bench}
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse flags, layering them over the --config file and environment defaults

    Keys of the form <problem>.<parameter> in the config file override
    problem parameters and are returned in `args.problem_overrides`.

    Returns:
        argparse.Namespace: Parsed arguments
    """
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    args = parser.parse_args(argv)
    dotted: dict[str, str] = {}
    if args.config:
        subparser = parser.commands[args.command]
        actions = {action.dest: action for action in subparser._actions}
        file_defaults: dict[str, Any] = {}
        for key, value in read_config_file(args.config).items():
            key, value = key.strip(), value.strip()
            dest = key.replace("-", "_")
            if "." in key:
                dotted[key] = value
            elif dest in actions:
                if isinstance(actions[dest], argparse._StoreTrueAction):
                    file_defaults[dest] = value.lower() in TRUTHY
                else:
                    file_defaults[dest] = value
            else:
                raise ConfigError(f"unknown key {key!r} in config file {args.config}")
        subparser.set_defaults(**file_defaults)
        args = parser.parse_args(argv)

    problem = getattr(args, "problem", None)
    args.problem_overrides = {
        key.partition(".")[2]: value
        for key, value in dotted.items()
        if key.partition(".")[0] == problem
    }
    return args
