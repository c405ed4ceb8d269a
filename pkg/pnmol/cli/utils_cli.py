"""
Console helpers for the pnmol command line.
"""

from __future__ import annotations

import argparse

from ascii_colors import ASCIIColors

from .. import __version__ as core_version
from . import __cli_version__ as cli_version


def _item(label: str, value, last: bool = False) -> None:
    ASCIIColors.white(f"    {'└─' if last else '├─'} {label}: ", end="")
    ASCIIColors.yellow(f"{value}")


def display_splash_screen(args: argparse.Namespace) -> None:
    """
    Display a colorful splash screen showing the run configuration

    Args:
        args: Parsed command line arguments
    """
    ASCIIColors.cyan(f"""
    ╔══════════════════════════════════════════════════════════════╗
    ║                   PNMOL v{core_version}/{cli_version}                         ║
    ║        Probabilistic Numerical Method of Lines for PDEs      ║
    ╚══════════════════════════════════════════════════════════════╝
    """)

    ASCIIColors.magenta(f"\n⚙️  Command: {args.command}")
    _item("Kernel", args.kernel)
    if args.kernel == "se":
        _item("Input scale", args.input_scale)
    else:
        _item("Degree", args.degree)
    _item("Stencil radius", "global" if args.radius is None else args.radius)

    if args.command == "discretize":
        _item("Operator", args.operator)
        _item("Grid points", args.grid_n)
    elif args.command == "solve":
        _item("Problem", args.problem)
        _item("Variant", args.variant)
        _item("dx / dt", f"{args.dx} / {args.dt}")
        _item("nu", args.nu)
        _item("Calibrate", not args.no_calibrate)
        _item("Gram floor", args.gram_floor)
    elif args.command == "bench":
        _item("Problem", args.problem)
        _item("Variants", ", ".join(args.variants))
        _item("dx", ", ".join(map(str, args.dx)))
        _item("dt", ", ".join(map(str, args.dt)))
        _item("nu", args.nu)
        _item("Reference refinement", args.ref_refine)
        _item("Max parallel", args.max_parallel)
    if args.problem_overrides:
        _item("Problem overrides", args.problem_overrides)
    _item("Log level", args.log_level)
    if args.log_file:
        _item("Log file", args.log_file)
    _item("Output", args.out, last=True)
    ASCIIColors.green("\n✨ Starting\n")
