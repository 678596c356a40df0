"""Outer iterations: feasible descent with full or screened constraint sets.

Both variants keep every iterate feasible and the objective monotonically
decreasing; they differ only in which constraints enter the direction
subproblem. The active-set variant screens by value (g_i >= -delta) plus a
top-quantile safeguard, and the line search still checks all m constraints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .direction import DirectionRequest, DirectionSolution, solve_direction, solve_direction_qp
from .linesearch import backtrack
from .problem import KktResidual, ProblemDef, as_point, check_feasibility, eval_objective, kkt_residual

Array = np.ndarray


class InfeasibleStartError(ValueError):
    """The initial point violates a constraint; these methods never repair that."""


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters shared by all solver variants.

    feas_tol is the logical feasibility threshold used by the line search
    and start check (0 demands g_i <= 0 exactly); test suites assert traces
    against the looser 1e-9 to absorb floating-point leakage. delta and
    q_percent only matter for the active-set variant.
    """

    alpha: float = 1.0
    gamma: float = 0.1
    w_floor: float = 1e-3
    epsilon: float = 1e-5
    delta: float = 0.5
    q_percent: float = 5.0
    max_iter: int = 5000
    max_halvings: int = 60
    feas_tol: float = 0.0
    adaptive_w: bool = True

    def __post_init__(self):
        if self.alpha <= 0 or self.w_floor <= 0 or self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("alpha, w_floor, epsilon and delta must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.q_percent <= 100.0:
            raise ValueError("q_percent must lie in [0, 100]")
        if self.max_iter < 1 or self.max_halvings < 0 or self.feas_tol < 0:
            raise ValueError("invalid iteration caps or feas_tol")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    f: float
    max_g: float
    u_norm_sq: float
    step: float
    active_count: int
    halvings: int
    wall_ns: int


@dataclass(frozen=True)
class SolveResult:
    x_final: Array
    status: str                   # converged | max_iter | line_search_failure | subproblem_failure
    trace: list
    final_kkt: KktResidual
    multipliers: Array            # zero-extended off the final active set
    subproblem_ns: int            # total wall time spent in direction solves


def select_active_set(g_values, delta: float, q_percent: float) -> Array:
    """Indices with g_i >= -delta, plus the ceil(q m / 100) largest values.

    Ties in the quantile part break toward lower index. The result always
    contains the whole delta-active set.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0.0 <= q_percent <= 100.0:
        raise ValueError("q_percent must lie in [0, 100]")
    g = np.asarray(g_values, dtype=float).reshape(-1)
    m = g.size
    a_delta = np.where(g >= -delta)[0]
    count = int(np.ceil(q_percent * m / 100.0)) if q_percent > 0 else 0
    if count > 0:
        # stable sort on -g: descending values, ties by lower index
        top = np.argsort(-g, kind="stable")[:count]
        return np.union1d(a_delta, top).astype(int)
    return a_delta.astype(int)


def update_w(w, x_prev, x_next, grads_prev, grads_next) -> Array:
    """Curvature-tracking weight update; entrywise nondecreasing.

    w_i' = max(w_i, ||grad_g_i(x_next) - grad_g_i(x_prev)|| / (2 ||dx||)).
    """
    wv = np.asarray(w, dtype=float).reshape(-1)
    xp = np.asarray(x_prev, dtype=float).reshape(-1)
    xn = np.asarray(x_next, dtype=float).reshape(-1)
    dx = float(np.linalg.norm(xn - xp))
    if dx == 0.0:
        raise ValueError("zero displacement; skip the weight update instead")
    gp = np.asarray(grads_prev, dtype=float).reshape(wv.size, -1)
    gn = np.asarray(grads_next, dtype=float).reshape(wv.size, -1)
    ratios = np.linalg.norm(gn - gp, axis=1) / (2.0 * dx)
    return np.maximum(wv, ratios)


def _run(p: ProblemDef, x0, cfg: SolverConfig,
         select_fn: Callable[[Array], Array],
         direction_fn: Callable[[DirectionRequest], DirectionSolution],
         adaptive_w: bool) -> SolveResult:
    x = as_point(x0, p.n)
    report = check_feasibility(p, x, cfg.feas_tol)
    if not report.feasible:
        raise InfeasibleStartError(
            f"start violates constraints by {report.max_violation:.3e} "
            f"(feas_tol={cfg.feas_tol:g})")

    m = p.m
    w = np.full(m, cfg.w_floor)
    trace: list[TraceRecord] = []
    status = "max_iter"
    last_act = np.zeros(0, dtype=int)
    last_mult = np.zeros(0)
    sub_ns_total = 0

    for k in range(cfg.max_iter):
        t_iter = time.perf_counter_ns()
        f_x, grad_f = eval_objective(p, x)
        if m:
            gvals = np.asarray(p.constraints(x), dtype=float).reshape(-1)
            max_g = float(gvals.max())
        else:
            gvals = np.zeros(0)
            max_g = float("-inf")
        act = select_fn(gvals)
        rows = np.asarray(p.constraint_jacobian(x, act), dtype=float).reshape(-1, p.n)

        sol = None
        for attempt in range(4):
            req = DirectionRequest(grad_f, gvals[act], rows, act, cfg.alpha, w[act])
            t_sub = time.perf_counter_ns()
            sol = direction_fn(req)
            sub_ns_total += time.perf_counter_ns() - t_sub
            if sol.status == "optimal":
                break
            if attempt < 3:
                w = 2.0 * w   # shrinks the direction set toward 0, keeps w >= w_floor
        if sol.status != "optimal":
            status = "subproblem_failure"
            trace.append(TraceRecord(k, f_x, max_g, float("nan"), 0.0, int(act.size),
                                     0, time.perf_counter_ns() - t_iter))
            break
        last_act, last_mult = act, sol.multipliers

        u = sol.u
        u_sq = float(u @ u)
        if np.sqrt(u_sq) <= cfg.epsilon:
            status = "converged"
            trace.append(TraceRecord(k, f_x, max_g, u_sq, 0.0, int(act.size), 0,
                                     time.perf_counter_ns() - t_iter))
            break

        ls = backtrack(p, x, u, grad_f, cfg.gamma, cfg.max_halvings,
                       cfg.feas_tol, f_x=f_x)
        if not ls.accepted:
            status = "line_search_failure"
            trace.append(TraceRecord(k, f_x, max_g, u_sq, 0.0, int(act.size),
                                     ls.halvings, time.perf_counter_ns() - t_iter))
            break

        if adaptive_w and m:
            rows_prev = rows if act.size == m else \
                np.asarray(p.constraint_jacobian(x, None), dtype=float)
            rows_next = np.asarray(p.constraint_jacobian(ls.trial, None), dtype=float)
            w = update_w(w, x, ls.trial, rows_prev, rows_next)

        trace.append(TraceRecord(k, f_x, max_g, u_sq, ls.t, int(act.size),
                                 ls.halvings, time.perf_counter_ns() - t_iter))
        x = ls.trial

    lam_full = np.zeros(m)
    if last_act.size:
        lam_full[last_act] = last_mult
    return SolveResult(x, status, trace, kkt_residual(p, x, lam_full),
                       lam_full, sub_ns_total)


def ss_qcqp(p: ProblemDef, x0, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Feasible-descent solve with every constraint in each subproblem.

    Requires a feasible start; every iterate stays feasible and f decreases
    monotonically. Terminates when ||u|| <= cfg.epsilon (converged), on
    iteration cap, or with a diagnostic failure status.
    """
    full = np.arange(p.m, dtype=int)
    return _run(p, x0, cfg, lambda g: full, solve_direction, cfg.adaptive_w)


def ss_qcqp_as(p: ProblemDef, x0, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Active-set variant: subproblems see only the screened constraints.

    Screening is select_active_set(g, cfg.delta, cfg.q_percent) each
    iteration. Weight updates still sweep all m constraint gradients once
    per accepted step, and the line search checks all m constraints, so
    feasibility guarantees are identical to the full variant.
    """
    return _run(p, x0, cfg, lambda g: select_active_set(g, cfg.delta, cfg.q_percent),
                solve_direction, cfg.adaptive_w)


def qp_baseline(p: ProblemDef, x0, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Outer loop driven by the linearized-QP direction (no quadratic term).

    Exists as a comparison baseline: near curved boundaries the QP direction
    can be tangent, every trial step is then infeasible, and the run ends
    with line_search_failure. That behavior is the point.
    """
    full = np.arange(p.m, dtype=int)
    return _run(p, x0, cfg, lambda g: full, solve_direction_qp, False)
