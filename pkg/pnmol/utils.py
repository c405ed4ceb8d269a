from __future__ import annotations

import asyncio
import importlib
import logging
import logging.handlers
import os
import time
from functools import wraps
from typing import Any, Callable, Optional

import numpy as np
import scipy.linalg
from dotenv import load_dotenv

from .exceptions import ConfigError, GramFactorizationError, NumericalError

# a .env in the run directory supplies PNMOL_* defaults; real env vars win
load_dotenv(dotenv_path=".env", override=False)

TRUTHY = ("true", "1", "yes", "t", "on")


def get_env_value(env_key: str, default: Any, value_type: type = str) -> Any:
    """`env_key` converted to `value_type`, or `default` when unset.

    Raises:
        ConfigError: the variable is set but cannot be converted
    """
    raw = os.getenv(env_key)
    if raw is None:
        return default
    if value_type is bool:
        return raw.strip().lower() in TRUTHY
    try:
        return value_type(raw.strip())
    except ValueError as e:
        raise ConfigError(
            f"environment variable {env_key}={raw!r} is not a valid {value_type.__name__}"
        ) from e


logger = logging.getLogger("pnmol")
logger.propagate = False
logger.setLevel(logging.INFO)

VERBOSE_DEBUG = get_env_value("VERBOSE", False, bool)
DEBUG_WIDTH = get_env_value("PNMOL_DEBUG_WIDTH", 100, int)


def verbose_debug(msg: str, *args) -> None:
    """Debug-log a message that may embed matrices or state vectors.

    Without verbose mode the formatted text is cut to PNMOL_DEBUG_WIDTH
    characters.
    """
    if not logger.isEnabledFor(logging.DEBUG):
        return
    text = msg % args if args else msg
    if not VERBOSE_DEBUG and len(text) > DEBUG_WIDTH:
        text = f"{text[:DEBUG_WIDTH]}... ({len(text)} chars)"
    logger.debug(text)


def set_verbose_debug(enabled: bool) -> None:
    global VERBOSE_DEBUG
    VERBOSE_DEBUG = bool(enabled)


def setup_logger(
    logger_name: str = "pnmol",
    level: str = "INFO",
    log_file_path: Optional[str] = None,
    enable_file_logging: bool = False,
) -> logging.Logger:
    """Set up a logger with a console handler and optionally a rotating file handler

    Args:
        logger_name: Logger to configure
        level: Log level name
        log_file_path: Log file. If None and file logging is enabled, PNMOL_LOG_FILE or pnmol.log in LOG_DIR (default cwd)
        enable_file_logging: Whether to also log to a file
    """
    target = logging.getLogger(logger_name)
    target.setLevel(level)
    target.propagate = False
    target.handlers = []

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    console.setLevel(level)
    target.addHandler(console)

    if not enable_file_logging:
        return target

    if log_file_path is None:
        log_file_path = os.getenv("PNMOL_LOG_FILE") or os.path.join(
            os.getenv("LOG_DIR", os.getcwd()), "pnmol.log"
        )
    log_file_path = os.path.abspath(log_file_path)
    os.makedirs(os.path.dirname(log_file_path), exist_ok=True)
    try:
        handler = logging.handlers.RotatingFileHandler(
            log_file_path,
            maxBytes=get_env_value("LOG_MAX_BYTES", 10 * 1024 * 1024, int),
            backupCount=get_env_value("LOG_BACKUP_COUNT", 5, int),
            encoding="utf-8",
        )
    except PermissionError as e:
        target.warning(f"Cannot write log file {log_file_path} ({e}), logging to console only")
    else:
        handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        handler.setLevel(level)
        target.addHandler(handler)
    return target


def limit_async_func_call(max_size: int):
    """Decorator: at most `max_size` calls of the wrapped coroutine run at once."""

    def decorator(func):
        semaphore = asyncio.Semaphore(max_size)

        @wraps(func)
        async def limited(*args, **kwargs):
            async with semaphore:
                return await func(*args, **kwargs)

        return limited

    return decorator


def always_get_an_event_loop() -> asyncio.AbstractEventLoop:
    """Current event loop of the main thread, or a fresh one if it is missing or closed."""
    try:
        loop = asyncio.get_event_loop()
    except RuntimeError:
        loop = None
    if loop is None or loop.is_closed():
        logger.debug("Creating a new event loop")
        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)
    return loop


def lazy_external_import(
    module_name: str, attr_name: str, package: Optional[str] = None
) -> Callable[..., Any]:
    """Return a callable that imports `module_name` on first use and calls `attr_name` from it."""

    def call(*args: Any, **kwargs: Any):
        module = importlib.import_module(module_name, package=package)
        return getattr(module, attr_name)(*args, **kwargs)

    return call


class RuntimeTracker:
    """Accumulates wall-clock seconds over `with tracker:` blocks."""

    def __init__(self):
        self.total_seconds = 0.0
        self.call_count = 0
        self._started: Optional[float] = None

    def __enter__(self):
        self._started = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.total_seconds += time.perf_counter() - self._started
        self.call_count += 1
        self._started = None

    def __str__(self):
        return f"{self.call_count} solve(s) in {self.total_seconds:.3f}s"


# Jitter ladder shared by every factorisation in the package:
# nugget 0, then 1e-12 * mean(diag), ten-fold up to 1e-6 * mean(diag).
JITTER_LADDER = (0.0,) + tuple(10.0 ** (-e) for e in range(12, 5, -1))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def jittered_cho_factor(
    matrix: np.ndarray,
    error_cls: type[NumericalError] = GramFactorizationError,
    what: str = "matrix",
) -> tuple[tuple[np.ndarray, bool], float]:
    """Cholesky-factorise a symmetric PSD matrix, escalating a diagonal nugget on failure.

    Returns:
        The `scipy.linalg.cho_factor` result and the nugget that was added.

    Raises:
        error_cls: if the matrix is still not factorisable at the last rung.
    """
    matrix = symmetrize(np.asarray(matrix, dtype=float))
    n = matrix.shape[0]
    scale = float(np.mean(np.diag(matrix))) if n else 0.0
    if not np.isfinite(scale):
        raise error_cls(f"{what} contains non-finite entries")
    if scale <= 0.0:
        scale = 1.0

    for rung in JITTER_LADDER:
        nugget = rung * scale
        try:
            factor = scipy.linalg.cho_factor(
                matrix + nugget * np.eye(n), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(factor[0])):
            continue
        if nugget > 0.0:
            logger.debug(f"{what}: factorised with nugget {nugget:.3e}")
        return factor, nugget

    raise error_cls(
        f"{what} of size {n} is not positive definite after jitter {JITTER_LADDER[-1] * scale:.3e}"
    )


def cho_solve_psd(
    matrix: np.ndarray,
    rhs: np.ndarray,
    error_cls: type[NumericalError] = GramFactorizationError,
    what: str = "matrix",
) -> np.ndarray:
    """Solve `matrix @ x = rhs` for symmetric PSD `matrix` through the jitter ladder."""
    factor, _ = jittered_cho_factor(matrix, error_cls=error_cls, what=what)
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def psd_violation(matrix: np.ndarray) -> float:
    """Most negative eigenvalue relative to trace/dim (0.0 if the matrix is PSD)."""
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if n == 0:
        return 0.0
    eigenvalues = np.linalg.eigvalsh(symmetrize(matrix))
    scale = max(abs(np.trace(matrix)) / n, np.finfo(float).tiny)
    return float(max(0.0, -eigenvalues.min()) / scale)


def is_psd(matrix: np.ndarray, tol: float = 1e-8) -> bool:
    """Symmetric PSD up to eigenvalues >= -tol * trace / dim."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, atol=1e-12 * max(1.0, np.abs(matrix).max(initial=0.0))):
        return False
    return psd_violation(matrix) <= tol


def floor_spectrum(matrix: np.ndarray, floor: float) -> np.ndarray:
    """Symmetric PSD matrix with every eigenvalue raised to at least floor * largest.

    A floor of 0 returns the matrix unchanged (symmetrised).
    """
    matrix = symmetrize(np.asarray(matrix, dtype=float))
    if floor <= 0.0 or matrix.shape[0] == 0:
        return matrix
    eigenvalues, vectors = np.linalg.eigh(matrix)
    top = max(float(eigenvalues.max()), 0.0)
    floored = np.maximum(eigenvalues, floor * top)
    return symmetrize((vectors * floored) @ vectors.T)
