"""Anytime-feasible first-order solver for smooth inequality-constrained programs.

Every iterate produced by the solvers in this package satisfies all
inequality constraints, and the objective decreases monotonically; runs can
be stopped at any iteration with a usable point.
"""

from .problem import (
    ProblemDef,
    FeasibilityReport,
    KktResidual,
    as_point,
    eval_objective,
    eval_constraints,
    check_feasibility,
    kkt_residual,
    fd_gradient_check,
)
from .direction import (
    DirectionRequest,
    DirectionSolution,
    ConicProgram,
    to_conic_form,
    solve_direction,
    solve_direction_qp,
    verify_direction_kkt,
)
from .linesearch import StepResult, backtrack, theoretical_step_bound
from .solver import (
    SolverConfig,
    TraceRecord,
    SolveResult,
    InfeasibleStartError,
    ss_qcqp,
    ss_qcqp_as,
    qp_baseline,
    select_active_set,
    update_w,
)
from .flow import FlowTrace, FlowBreachError, integrate_flow
from . import bench

__version__ = "0.1.0"

__all__ = [
    "ProblemDef", "FeasibilityReport", "KktResidual", "as_point",
    "eval_objective", "eval_constraints", "check_feasibility",
    "kkt_residual", "fd_gradient_check",
    "DirectionRequest", "DirectionSolution", "ConicProgram",
    "to_conic_form", "solve_direction", "solve_direction_qp",
    "verify_direction_kkt",
    "StepResult", "backtrack", "theoretical_step_bound",
    "SolverConfig", "TraceRecord", "SolveResult", "InfeasibleStartError",
    "ss_qcqp", "ss_qcqp_as", "qp_baseline", "select_active_set", "update_w",
    "FlowTrace", "FlowBreachError", "integrate_flow",
    "bench",
]
