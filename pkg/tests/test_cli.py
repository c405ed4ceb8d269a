"""
Command line parsing, config files and exit codes.
"""

import os
import sys

import pandas as pd
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pnmol.cli.config import parse_args
from pnmol.exceptions import ConfigError, NumericalError, PnmolError


def test_solve_arguments():
    args = parse_args(["solve", "--problem", "sir", "--variant", "white", "--radius", "global"])
    assert args.command == "solve"
    assert args.problem == "sir"
    assert args.variant == "white"
    assert args.radius is None
    assert args.problem_overrides == {}


def test_bench_lists():
    args = parse_args(["bench", "--dx", "0.1,0.2", "--variants", "latent,mol"])
    assert args.dx == [0.1, 0.2]
    assert args.variants == ["latent", "mol"]
    assert args.dt == [0.01]


def test_config_file_is_overridden_by_flags(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text(
        "# sweep settings\n"
        "dx = 0.5\n"
        "variant = mol\n"
        "no-calibrate = true\n"
        "heat.alpha = 0.3\n"
        "sir.beta = 2\n"
    )
    args = parse_args(["solve", "--config", str(config), "--dx", "0.25"])
    assert args.dx == 0.25
    assert args.variant == "mol"
    assert args.no_calibrate is True
    assert args.problem_overrides == {"alpha": "0.3"}


def test_unknown_config_key_is_a_config_error(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("speed = 3\n")
    with pytest.raises(ConfigError):
        parse_args(["solve", "--config", str(config)])


def test_environment_defaults(monkeypatch):
    monkeypatch.setenv("PNMOL_DT", "0.05")
    assert parse_args(["solve"]).dt == 0.05
    monkeypatch.setenv("PNMOL_DT", "fast")
    with pytest.raises(ConfigError):
        parse_args(["solve"])


def test_gram_floor_and_log_file_flags(tmp_path, monkeypatch):
    monkeypatch.delenv("PNMOL_LOG_FILE", raising=False)
    monkeypatch.delenv("PNMOL_GRAM_FLOOR", raising=False)
    args = parse_args(["solve"])
    assert args.gram_floor == 1e-4
    assert args.log_file is None
    log_file = str(tmp_path / "solve.log")
    args = parse_args(["solve", "--gram-floor", "0", "--log-file", log_file])
    assert args.gram_floor == 0.0
    assert args.log_file == log_file


def test_usage_errors_exit_with_status_one():
    with pytest.raises(SystemExit) as exc:
        parse_args(["solve", "--variant", "implicit"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        parse_args(["solve", "--radius", "0"])
    assert exc.value.code == 1


def test_exit_codes_of_error_classes():
    assert PnmolError.exit_code == 1
    assert ConfigError.exit_code == 1
    assert NumericalError.exit_code == 2


def test_main_solve_writes_posterior(tmp_path):
    pytest.importorskip("ascii_colors")
    from pnmol.cli.pnmol_cli import main

    out = tmp_path / "solution.csv"
    code = main(
        ["solve", "--quiet", "--problem", "heat", "--dx", "0.25", "--dt", "0.25", "--input-scale", "2.0", "--out", str(out)]
    )
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["t", "x", "field", "mean", "std"]
    assert len(frame) == 5 * 5


def test_main_discretize_writes_matrices(tmp_path):
    pytest.importorskip("ascii_colors")
    from pnmol.cli.pnmol_cli import main

    out = tmp_path / "d_and_e.csv"
    code = main(
        ["discretize", "--quiet", "--grid-n", "7", "--input-scale", "2.0", "--out", str(out)]
    )
    assert code == 0
    assert set(pd.read_csv(out)["matrix"]) == {"D", "E"}


def test_main_reports_configuration_errors(tmp_path):
    pytest.importorskip("ascii_colors")
    from pnmol.cli.pnmol_cli import main

    code = main(["solve", "--quiet", "--dx", "10", "--out", str(tmp_path / "x.csv")])
    assert code == 1
