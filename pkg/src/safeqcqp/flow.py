"""Forward-Euler integration of the continuous direction field x' = u(x).

This module validates the continuous-time claims behind the discrete
solver (invariance of the feasible set and the energy bound on the
integral of ||u||^2) at small step sizes. It is not a production
integrator: weights stay fixed at the floor and there is no line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .direction import DirectionRequest, solve_direction
from .problem import ProblemDef, as_point, eval_objective
from .solver import SolverConfig

Array = np.ndarray


class FlowBreachError(RuntimeError):
    """The trajectory left the feasible set by more than breach_tol (step too large)."""


@dataclass(frozen=True)
class FlowTrace:
    times: Array
    states: Array           # (len(times), n)
    u_norm_sq: Array
    f_values: Array
    integral_half_u_sq: float   # trapezoidal 0.5 * integral of ||u||^2 dt


def integrate_flow(p: ProblemDef, x0, h: float, T: float,
                   cfg: SolverConfig = SolverConfig(),
                   breach_tol: float = 1e-6) -> FlowTrace:
    """Integrate x' = u(x) with forward Euler steps of size h up to time T.

    The direction field u(x) solves the same QCQP as the discrete method,
    with all constraints active and weights fixed at cfg.w_floor. Any node
    with max_i g_i(x) > breach_tol aborts with FlowBreachError, since a
    breach can only come from discretization error.
    """
    if h <= 0 or T <= 0:
        raise ValueError("h and T must be positive")
    x = as_point(x0, p.n)
    steps = int(round(T / h))
    times = h * np.arange(steps + 1)
    states = np.empty((steps + 1, p.n))
    u_sq = np.empty(steps + 1)
    f_vals = np.empty(steps + 1)
    w = np.full(p.m, cfg.w_floor)
    full = np.arange(p.m, dtype=int)

    for j in range(steps + 1):
        if p.m:
            gvals = np.asarray(p.constraints(x), dtype=float).reshape(-1)
            breach = float(gvals.max())
            if breach > breach_tol:
                raise FlowBreachError(
                    f"feasibility breach {breach:.3e} > {breach_tol:g} at t={times[j]:.6f}")
        else:
            gvals = np.zeros(0)
        f_x, grad_f = eval_objective(p, x)
        rows = np.asarray(p.constraint_jacobian(x, None), dtype=float).reshape(-1, p.n)
        sol = solve_direction(DirectionRequest(grad_f, gvals, rows, full, cfg.alpha, w))
        if sol.status != "optimal":
            raise RuntimeError(f"direction subproblem failed ({sol.status}) at t={times[j]:.6f}")
        states[j] = x
        f_vals[j] = f_x
        u_sq[j] = float(sol.u @ sol.u)
        if j < steps:
            x = x + h * sol.u

    integral = 0.5 * float(np.trapezoid(u_sq, times))
    return FlowTrace(times, states, u_sq, f_vals, integral)
