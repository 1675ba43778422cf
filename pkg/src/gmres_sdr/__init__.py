"""Sketched GMRES with deflated restarting and Krylov subspace recycling."""

from .driver import SolveReport, SolverConfig, solve, solve_cycle, solve_gmres_baseline, solve_sequence
from .linop import (
    ProblemInstance,
    ProblemSequence,
    SparseMatrix,
    gen_convdiff,
    gen_neumann,
    parse_matrix_market,
    read_matrix_market,
    write_matrix_market,
)
from .recycle import RecycleSpace
from .sketch import SketchOperator, apply_sketch, identity_sketch, make_sketch

__version__ = "0.1.0"

__all__ = [
    "ProblemInstance",
    "ProblemSequence",
    "RecycleSpace",
    "SketchOperator",
    "SolveReport",
    "SolverConfig",
    "SparseMatrix",
    "apply_sketch",
    "gen_convdiff",
    "gen_neumann",
    "identity_sketch",
    "make_sketch",
    "parse_matrix_market",
    "read_matrix_market",
    "solve",
    "solve_cycle",
    "solve_gmres_baseline",
    "solve_sequence",
    "write_matrix_market",
]
