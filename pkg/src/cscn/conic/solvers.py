"""Solver entry point, :func:`solve`.

The backend is Clarabel, a compiled primal-dual interior-point solver for
products of zero, nonnegative and second-order cones. Infeasibility is
reported as a status, never raised. Every returned point is re-checked
against the program's cones independently of the solver's own residuals.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import (INFEASIBLE, NONNEG, NUMERICAL, OPTIMAL, SOC, UNBOUNDED, ZERO, ConicProgram,
                      ConicSolution)

DEFAULT_TOL = 1e-7


def _clarabel(program: ConicProgram, tol: float) -> ConicSolution:
    import clarabel

    G, h, cones = program.stacked()
    n = program.num_vars
    cone_objs = []
    for kind, dim in cones:
        if kind == ZERO:
            cone_objs.append(clarabel.ZeroConeT(dim))
        elif kind == NONNEG:
            cone_objs.append(clarabel.NonnegativeConeT(dim))
        elif kind == SOC:
            cone_objs.append(clarabel.SecondOrderConeT(dim))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_ktratio = min(1e-6, tol)
    settings.max_iter = 200
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), np.asarray(program.c, dtype=float),
                                    G, h, cone_objs, settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    viol = program.violation(x) if x.size == n else np.inf
    gap = float(abs(sol.obj_val - sol.obj_val_dual)) / max(1.0, abs(sol.obj_val))
    # stalled runs are kept when the iterate is independently feasible and the gap closed
    usable = viol <= 10 * tol * max(1.0, float(np.abs(h).max(initial=0.0))) and gap <= 1e3 * tol
    if status == "Solved":
        st = OPTIMAL
    elif "PrimalInfeasible" in status:
        st = INFEASIBLE
    elif "DualInfeasible" in status:
        st = UNBOUNDED
    else:
        st = OPTIMAL if usable else NUMERICAL
    return ConicSolution(
        x=x, objective=float(program.c @ x) + program.offset if x.size == n else np.nan, status=st,
        primal_residual=float(sol.r_prim), dual_residual=float(sol.r_dual), gap=gap,
        iterations=int(sol.iterations), info={"backend": "clarabel", "raw_status": status},
    )


def solve(program: ConicProgram, tolerance: float = DEFAULT_TOL, backend: str = "clarabel") -> ConicSolution:
    """Solve ``program``; the returned status is one of optimal, infeasible,
    unbounded or numerical-limit."""
    if backend == "clarabel":
        return _clarabel(program, tolerance)
    raise ValueError(f"unknown backend {backend!r}")
