"""Strongly monotone tamed Euler scheme for SDEs with superlinear monotone drift."""

from .model import (
    A4Data,
    SdeProblem,
    builtin_cubic_constant_diffusion,
    builtin_cubic_multiplicative,
    builtin_linear_ou,
    get_problem,
)
from .paths import IncrementGrid, coarsen, generate, sample_initial
from .solver import ClassicalTamed, MonotonePolygonal, SimulationOutput, Vanilla, simulate, simulate_pair
from .taming import SchemeUndefinedError, TamedDrift, f_eval, locate_s_n

__all__ = [
    "A4Data",
    "ClassicalTamed",
    "IncrementGrid",
    "MonotonePolygonal",
    "SchemeUndefinedError",
    "SdeProblem",
    "SimulationOutput",
    "TamedDrift",
    "Vanilla",
    "builtin_cubic_constant_diffusion",
    "builtin_cubic_multiplicative",
    "builtin_linear_ou",
    "coarsen",
    "f_eval",
    "generate",
    "get_problem",
    "locate_s_n",
    "sample_initial",
    "simulate",
    "simulate_pair",
]
