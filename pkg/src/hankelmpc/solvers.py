"""Thin wrapper around the installed cvxpy conic backends.

One call surface for both the synthesis SDP and the receding-horizon QP:
pick a backend (argument, then the HANKEL_MPC_SOLVER environment variable,
then the default), solve, and map the backend status onto the three
outcomes the rest of the package distinguishes.
"""

import os
import time
import warnings
from typing import NamedTuple, Optional

import cvxpy as cp

ENV_SOLVER = "HANKEL_MPC_SOLVER"
# Per-problem-class defaults: the interior-point SDP solver below is the
# most reliable installed backend on the synthesis LMIs; the QP default
# excels on the receding-horizon programs.
DEFAULT_SDP_SOLVER = "CVXOPT"
DEFAULT_QP_SOLVER = "CLARABEL"
# Backends able to handle semidefinite cones (needed by the synthesis LMI).
SDP_CAPABLE = ("CLARABEL", "SCS", "CVXOPT", "MOSEK")

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_FAILURE = "numerical-failure"

_STATUS_MAP = {
    cp.OPTIMAL: STATUS_OPTIMAL,
    cp.OPTIMAL_INACCURATE: STATUS_OPTIMAL,
    cp.INFEASIBLE: STATUS_INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: STATUS_INFEASIBLE,
}


class SolverFailure(RuntimeError):
    """The backend crashed or returned an unusable status.

    Deliberately distinct from infeasibility, which is a meaningful answer.
    """


class SolveInfo(NamedTuple):
    status: str
    value: Optional[float]
    time: float
    solver: str
    raw_status: str


def resolve_solver(name: Optional[str] = None, sdp: bool = False) -> str:
    """Backend name from the argument, environment, or default, validated."""
    default = DEFAULT_SDP_SOLVER if sdp else DEFAULT_QP_SOLVER
    chosen = (name or os.environ.get(ENV_SOLVER) or default).upper()
    installed = cp.installed_solvers()
    if chosen not in installed:
        raise SolverFailure(
            f"solver {chosen!r} is not installed (available: {', '.join(installed)})")
    if sdp and chosen not in SDP_CAPABLE:
        raise SolverFailure(
            f"solver {chosen!r} cannot handle semidefinite cones; "
            f"use one of {', '.join(s for s in SDP_CAPABLE if s in installed)}")
    return chosen


def solve(problem: cp.Problem, solver: Optional[str] = None, sdp: bool = False,
          **options) -> SolveInfo:
    """Solve a cvxpy problem; never raises on infeasibility or solver crashes."""
    name = resolve_solver(solver, sdp=sdp)
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # inaccurate-status warnings are already carried by raw_status
            warnings.simplefilter("ignore", UserWarning)
            problem.solve(solver=name, **options)
    except (cp.SolverError, ValueError, ArithmeticError) as exc:
        elapsed = time.perf_counter() - start
        return SolveInfo(STATUS_FAILURE, None, elapsed, name, f"exception: {exc}")
    elapsed = time.perf_counter() - start
    status = _STATUS_MAP.get(problem.status, STATUS_FAILURE)
    value = problem.value if status == STATUS_OPTIMAL else None
    return SolveInfo(status, value, elapsed, name, str(problem.status))
