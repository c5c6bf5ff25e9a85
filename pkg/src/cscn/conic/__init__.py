"""Conic programs: canonical form, assembly of the per-slot programs, solvers."""
from .assemble import (LinearizationError, assemble_fixed_clustering, assemble_subproblem,
                       beams_from_solution, whiten)
from .program import (INFEASIBLE, NUMERICAL, OPTIMAL, UNBOUNDED, Block, ConicProgram, ConicSolution,
                      ProgramBuilder, lift_complex, lift_functional, unlift_complex)
from .solvers import DEFAULT_TOL, solve

__all__ = [
    "Block", "ConicProgram", "ConicSolution", "ProgramBuilder", "LinearizationError",
    "assemble_subproblem", "assemble_fixed_clustering", "beams_from_solution", "whiten",
    "lift_complex", "unlift_complex", "lift_functional", "solve", "DEFAULT_TOL",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "NUMERICAL",
]
