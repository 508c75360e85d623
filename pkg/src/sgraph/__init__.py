"""Scaled-graph over-approximations of LTI, reset and piecewise-linear systems."""

from .model import PwlMode, PwlSystem, ResetSystem, StateSpace, SweepConfig, load_system
from .regions import RegionSpec, SGApproximation, make_pi
from .solve import CvxoptBackend, BisectionBackend, sweep, solve_interior, solve_exterior

__all__ = ["StateSpace", "ResetSystem", "PwlMode", "PwlSystem", "SweepConfig", "load_system",
           "RegionSpec", "SGApproximation", "make_pi", "CvxoptBackend", "BisectionBackend",
           "sweep", "solve_interior", "solve_exterior"]
__version__ = "0.1.0"
