from .base import SolverConfig as SolverConfig, SolverVariant as SolverVariant
from .solver import solve as solve

__version__ = "0.1.0"
__author__ = "PNMOL contributors"
__url__ = ""
