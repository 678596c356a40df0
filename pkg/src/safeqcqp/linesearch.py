"""Safeguarded backtracking: Armijo decrease plus feasibility of the trial point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .problem import ProblemDef, as_point

Array = np.ndarray


@dataclass(frozen=True)
class StepResult:
    t: float           # accepted (or last tried) step, always 2**(-halvings)
    halvings: int
    trial: Array
    f_trial: float
    accepted: bool


def backtrack(p: ProblemDef, x, u, grad_f, gamma: float, max_halvings: int = 60,
              feas_tol: float = 0.0, f_x: Optional[float] = None) -> StepResult:
    """Find the first t in {1, 1/2, 1/4, ...} passing both step conditions.

    A trial point x + t u is accepted when it is feasible
    (max_i g_i <= feas_tol, all m constraints checked) and satisfies the
    Armijo decrease f(x + t u) <= f(x) + gamma t grad_f' u. Returns
    accepted=False only when max_halvings is exhausted, which signals
    either u ~ 0 or a tolerance mismatch; the caller must treat that as a
    termination diagnostic, not silently continue.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if max_halvings < 0:
        raise ValueError("max_halvings must be nonnegative")
    xv = as_point(x, p.n)
    uv = np.asarray(u, dtype=float).reshape(-1)
    gf = np.asarray(grad_f, dtype=float).reshape(-1)
    if uv.size != p.n or gf.size != p.n:
        raise ValueError("direction or gradient has wrong dimension")
    if f_x is None:
        f_x = float(p.objective(xv))
    slope = float(gf @ uv)

    t = 1.0
    halvings = 0
    while True:
        trial = xv + t * uv
        feas_ok = True
        if p.m:
            gvals = np.asarray(p.constraints(trial), dtype=float)
            feas_ok = np.all(np.isfinite(gvals)) and float(gvals.max()) <= feas_tol
        f_trial = float(p.objective(trial))
        if feas_ok and np.isfinite(f_trial) and f_trial <= f_x + gamma * t * slope:
            return StepResult(t, halvings, trial, f_trial, True)
        if halvings >= max_halvings:
            return StepResult(t, halvings, trial, f_trial, False)
        t *= 0.5
        halvings += 1


def theoretical_step_bound(alpha: float, gamma: float, L_f: float, w_floor: float,
                           L_g: Sequence[float] = ()) -> float:
    """Analytic lower bound on the accepted step size.

    t_lower = min(1/alpha, 2(1-gamma)/L_f, 2 w_floor / L_i over constraints).
    Every t below this value passes both backtracking conditions when the
    weights satisfy w_i >= w_floor >= L_i/2-scaled curvature, so the halving
    grid accepts some t >= t_lower / 2.
    """
    if alpha <= 0 or L_f <= 0 or w_floor <= 0:
        raise ValueError("alpha, L_f and w_floor must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    bound = min(1.0 / alpha, 2.0 * (1.0 - gamma) / L_f)
    for L in L_g:
        if L <= 0:
            raise ValueError("constraint Lipschitz constants must be positive")
        bound = min(bound, 2.0 * w_floor / L)
    return bound
