"""Characteristic functions, zero counting and inverse experiments for star graphs
with frozen-argument non-local potentials."""
from .characteristic import CharacteristicFn, build
from .model import (
    EdgePotential,
    InvalidProblemError,
    NumericalPolicy,
    Problem,
    StarGraph,
    StarGraphError,
    load_problem,
    project_to_fourier,
    rational_independence_check,
    save_problem,
    validate,
)
from .transforms import SineTransform, sine_transform_quadrature, synthesize

__all__ = [
    "CharacteristicFn",
    "EdgePotential",
    "InvalidProblemError",
    "NumericalPolicy",
    "Problem",
    "SineTransform",
    "StarGraph",
    "StarGraphError",
    "build",
    "load_problem",
    "project_to_fourier",
    "rational_independence_check",
    "save_problem",
    "sine_transform_quadrature",
    "synthesize",
    "validate",
]
