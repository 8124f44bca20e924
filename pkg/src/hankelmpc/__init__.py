"""Data-driven MPC from a single input-output trajectory.

Predictions are parametrized through Hankel matrices built from one
persistently exciting record; terminal cost, controller, and invariant set
come from a data-only semidefinite program; the closed loop runs receding
horizon with stability diagnostics.
"""

from .boxes import Box
from .lti import (FOUR_TANK_SETPOINT, ExtendedRealization, LtiSystem,
                  extended_pair_controllable, extended_realization,
                  four_tank_system, is_equilibrium_model, lag,
                  observability_matrix, random_system, simulate, steady_state)
from .mpc import (ClosedLoopTrace, DiagnosticsReport, MpcConfig, MpcSolution,
                  build_ocp, diagnostics, mpc_step, run_closed_loop, solve_ocp)
from .solvers import SolverFailure
from .terminal import (KnownPart, SynthesisInfeasible, TerminalIngredients,
                       UncertaintyMultiplier, VerificationReport, known_part,
                       realization_from_data, synthesize, terminal_set_radius,
                       uncertainty_multiplier, verify_terminal_ingredients)
from .trajectory import (DataBank, HankelMatrix, IoTrajectory, TrajectoryFit,
                         build_data_bank, extended_state_from_history, hankel,
                         is_equilibrium_data, is_persistently_exciting,
                         steady_extended_state, trajectory_coefficients,
                         z_full_row_rank)

__version__ = "0.1.0"

__all__ = [
    "Box", "ClosedLoopTrace", "DataBank", "DiagnosticsReport",
    "ExtendedRealization", "FOUR_TANK_SETPOINT", "HankelMatrix",
    "IoTrajectory", "KnownPart", "LtiSystem", "MpcConfig", "MpcSolution",
    "SolverFailure", "SynthesisInfeasible", "TerminalIngredients",
    "TrajectoryFit", "UncertaintyMultiplier", "VerificationReport",
    "build_data_bank", "build_ocp", "diagnostics",
    "extended_pair_controllable", "extended_realization",
    "extended_state_from_history", "four_tank_system", "hankel",
    "is_equilibrium_data", "is_equilibrium_model",
    "is_persistently_exciting", "known_part", "lag", "mpc_step",
    "observability_matrix", "random_system", "realization_from_data",
    "run_closed_loop", "simulate", "solve_ocp", "steady_extended_state",
    "steady_state", "synthesize", "terminal_set_radius",
    "trajectory_coefficients", "uncertainty_multiplier",
    "verify_terminal_ingredients", "z_full_row_rank",
]
