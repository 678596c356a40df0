"""Problem containers and evaluation oracles.

A problem instance is  min f(x)  subject to  g_i(x) <= 0, i = 1..m,  with
user-supplied analytic gradients. All evaluation maps are pure functions;
a ProblemDef is immutable and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


def as_point(x, n: int) -> Array:
    """Validate x as a finite float vector of dimension n."""
    v = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if v.size != n:
        raise ValueError(f"expected a point of dimension {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("point has non-finite entries")
    return v


@dataclass(frozen=True)
class ProblemDef:
    """A smooth inequality-constrained program.

    Attributes
    ----------
    n, m : int
        Decision dimension and constraint count.
    objective, objective_grad : callable
        x -> f(x) and x -> grad f(x), analytic.
    constraints : callable
        x -> vector of all m constraint values g_i(x).
    constraint_jacobian : callable
        (x, idx) -> len(idx) x n matrix of constraint gradients; idx=None
        means all rows in order.
    lipschitz_f, lipschitz_g : optional
        Gradient Lipschitz constants, present only on test problems that
        carry analytic curvature bounds. Strictly positive when present.
    """

    n: int
    m: int
    objective: Callable[[Array], float]
    objective_grad: Callable[[Array], Array]
    constraints: Callable[[Array], Array]
    constraint_jacobian: Callable[[Array, Optional[Array]], Array]
    name: str = ""
    lipschitz_f: Optional[float] = None
    lipschitz_g: Optional[Array] = None

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.lipschitz_f is not None and not self.lipschitz_f > 0:
            raise ValueError("lipschitz_f must be strictly positive when present")
        if self.lipschitz_g is not None:
            lg = np.asarray(self.lipschitz_g, dtype=float)
            if lg.size != self.m or not np.all(lg > 0):
                raise ValueError("lipschitz_g must have m strictly positive entries")
            object.__setattr__(self, "lipschitz_g", lg)


@dataclass(frozen=True)
class FeasibilityReport:
    values: Array          # g_i(x), length m
    max_violation: float   # max_i g_i(x); -inf when m == 0
    feasible: bool         # max_violation <= feas_tol


@dataclass(frozen=True)
class KktResidual:
    stationarity: float      # ||grad f + sum_i lam_i grad g_i||_2
    primal: float            # max_i max(g_i, 0)
    dual: float              # max_i max(-lam_i, 0)
    complementarity: float   # max_i |lam_i g_i|

    @property
    def max_component(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def eval_objective(p: ProblemDef, x) -> tuple[float, Array]:
    """Evaluate (f(x), grad f(x)).

    Raises ValueError on dimension mismatch or non-finite outputs; a
    non-finite value means the problem instance is ill posed at x and
    must not be silently clamped.
    """
    xv = as_point(x, p.n)
    val = float(p.objective(xv))
    grad = np.asarray(p.objective_grad(xv), dtype=float).reshape(-1)
    if grad.size != p.n:
        raise ValueError("objective gradient has wrong dimension")
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise ValueError(f"non-finite objective evaluation at x={xv!r}")
    return val, grad


def eval_constraints(p: ProblemDef, x, subset=None) -> tuple[Array, Array]:
    """Evaluate constraint values and gradient rows for the given index subset.

    subset=None means all m constraints, in order. Returns (values, rows)
    with values[j] = g_subset[j](x) and rows[j] the matching gradient.
    """
    xv = as_point(x, p.n)
    if subset is None:
        idx = None
        vals = np.asarray(p.constraints(xv), dtype=float).reshape(-1)
    else:
        idx = np.asarray(subset, dtype=int).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= p.m):
            raise ValueError("constraint subset indices out of range")
        vals = np.asarray(p.constraints(xv), dtype=float).reshape(-1)[idx]
    rows = np.asarray(p.constraint_jacobian(xv, idx), dtype=float)
    rows = rows.reshape(-1, p.n)
    want = p.m if idx is None else idx.size
    if vals.size != want or rows.shape[0] != want:
        raise ValueError("constraint evaluation has wrong dimensions")
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rows))):
        raise ValueError(f"non-finite constraint evaluation at x={xv!r}")
    return vals, rows


def check_feasibility(p: ProblemDef, x, feas_tol: float = 0.0) -> FeasibilityReport:
    """Report g(x) and whether max_i g_i(x) <= feas_tol."""
    if feas_tol < 0:
        raise ValueError("feas_tol must be nonnegative")
    xv = as_point(x, p.n)
    if p.m == 0:
        return FeasibilityReport(np.zeros(0), float("-inf"), True)
    vals = np.asarray(p.constraints(xv), dtype=float).reshape(-1)
    if vals.size != p.m:
        raise ValueError("constraint evaluation has wrong dimensions")
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"non-finite constraint evaluation at x={xv!r}")
    mv = float(vals.max())
    return FeasibilityReport(vals, mv, mv <= feas_tol)


def kkt_residual(p: ProblemDef, x, lam) -> KktResidual:
    """Four-part KKT residual of the outer problem at (x, lam)."""
    xv = as_point(x, p.n)
    lv = np.asarray(lam, dtype=float).reshape(-1)
    if lv.size != p.m:
        raise ValueError(f"expected {p.m} multipliers, got {lv.size}")
    _, grad_f = eval_objective(p, xv)
    if p.m == 0:
        return KktResidual(float(np.linalg.norm(grad_f)), 0.0, 0.0, 0.0)
    gvals, grows = eval_constraints(p, xv)
    stat = float(np.linalg.norm(grad_f + grows.T @ lv))
    primal = float(np.maximum(gvals, 0.0).max())
    dual = float(np.maximum(-lv, 0.0).max())
    comp = float(np.abs(lv * gvals).max())
    return KktResidual(stat, primal, dual, comp)


def fd_gradient_check(p: ProblemDef, x, h: float = 1e-6) -> float:
    """Max abs error between analytic gradients and central differences.

    Covers the objective gradient and every constraint gradient row; the
    returned scalar is the worst entry-wise error over all of them.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xv = as_point(x, p.n)
    _, grad_f = eval_objective(p, xv)
    fd_f = np.empty(p.n)
    fd_g = np.empty((p.m, p.n)) if p.m else None
    for j in range(p.n):
        xp = xv.copy(); xp[j] += h
        xm = xv.copy(); xm[j] -= h
        fp = float(p.objective(xp)); fm = float(p.objective(xm))
        fd_f[j] = (fp - fm) / (2.0 * h)
        if p.m:
            gp = np.asarray(p.constraints(xp), dtype=float)
            gm = np.asarray(p.constraints(xm), dtype=float)
            fd_g[:, j] = (gp - gm) / (2.0 * h)
    err = float(np.abs(grad_f - fd_f).max())
    if p.m:
        _, grows = eval_constraints(p, xv)
        err = max(err, float(np.abs(grows - fd_g).max()))
    return err
