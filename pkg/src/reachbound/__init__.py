"""reachbound: guaranteed probability enclosures for hybrid-system reachability.

Given a hybrid model with one random initial parameter, a jump depth and a
precision target, the solver returns an interval that is mathematically
guaranteed to contain the exact probability of reaching the goal region,
combining validated interval quadrature of the parameter density with a
built-in bounded reachability decision over parameter boxes.
"""

__version__ = "0.1.0"

from .intervals import Box, Interval
from .pdrh import HybridModel, parse, print_model
from .reach import CellClass, ReachOptions, Verdict, classify, evaluate, ode_enclose
from .solver import ProbabilityEnclosure, ProgressEvent, SolverConfig, solve

__all__ = [
    "Box",
    "CellClass",
    "HybridModel",
    "Interval",
    "ProbabilityEnclosure",
    "ProgressEvent",
    "ReachOptions",
    "SolverConfig",
    "Verdict",
    "classify",
    "evaluate",
    "ode_enclose",
    "parse",
    "print_model",
    "solve",
    "__version__",
]
