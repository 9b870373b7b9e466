"""Numerical laboratory for entropy dissipation in zero-range processes."""

__version__ = "0.1.0"

from .rates import RateFunction, certify, constant, from_spec, linear, staircase
from .statespace import StateSpace, build_generator

__all__ = ["__version__", "RateFunction", "certify", "constant", "from_spec", "linear",
           "staircase", "StateSpace", "build_generator"]
