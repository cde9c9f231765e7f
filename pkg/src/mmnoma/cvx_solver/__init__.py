"""Inner convex subproblems and the barrier solver that handles them."""
from .barrier import SolveResult, SolverOptions, Status, is_strictly_feasible, solve
from .problem import CATALOG, Constraint, ConvexSubproblem, dump_subproblem
from .reference import cross_solve
from .subproblems import (
    DetectionPoint,
    build_detection_subproblem,
    build_power_subproblem,
    complex_join,
    pack_detection,
    real_split,
    response_form,
    unpack_detection,
)
from .surrogates import f_hat, interference_log, linearize_R2, linearize_u, u_value

__all__ = [
    "CATALOG",
    "Constraint",
    "ConvexSubproblem",
    "DetectionPoint",
    "SolveResult",
    "SolverOptions",
    "Status",
    "build_detection_subproblem",
    "build_power_subproblem",
    "complex_join",
    "cross_solve",
    "dump_subproblem",
    "f_hat",
    "interference_log",
    "is_strictly_feasible",
    "linearize_R2",
    "linearize_u",
    "pack_detection",
    "real_split",
    "response_form",
    "solve",
    "u_value",
    "unpack_detection",
]
