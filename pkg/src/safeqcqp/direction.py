"""Direction subproblems: the safeguarded QCQP, its conic form, and the QP baseline.

The descent direction at a feasible point x solves

    min_u  0.5 ||u + grad_f||^2
    s.t.   grad_g_i' u + alpha * g_i + w_i ||u||^2  <=  0     for i in the
           active set,

a convex QCQP. It is solved through a second-order-cone epigraph
reformulation; solutions are polished by a Newton step on the active KKT
system and always post-verified by residuals rather than trusting solver
status strings. The QP baseline drops the quadratic correction term
(w_i = 0), which can produce boundary-tangent directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

import clarabel
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers

Array = np.ndarray

DEFAULT_TOL_SUB = 1e-9
DEFAULT_TOL_KKT = 1e-6

# options for the primary conic backend; the second entry is the tightened retry
_CONEQP_OPTS = (
    {"show_progress": False, "abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9,
     "maxiters": 100, "refinement": 1},
    {"show_progress": False, "abstol": 1e-11, "reltol": 1e-11, "feastol": 1e-10,
     "maxiters": 200, "refinement": 2},
)


@dataclass(frozen=True)
class DirectionRequest:
    """Data of one direction subproblem at a feasible base point.

    g_values, g_gradients and weights are aligned row-wise and cover only
    the active subset; `active` keeps the original constraint indices so
    multipliers can be zero-extended by the caller.
    """

    grad_f: Array
    g_values: Array
    g_gradients: Array
    active: Array
    alpha: float
    weights: Array

    def __post_init__(self):
        gf = np.asarray(self.grad_f, dtype=float).reshape(-1)
        gv = np.asarray(self.g_values, dtype=float).reshape(-1)
        gg = np.asarray(self.g_gradients, dtype=float).reshape(-1, gf.size)
        act = np.asarray(self.active, dtype=int).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (gv.size == gg.shape[0] == act.size == w.size):
            raise ValueError("misaligned rows in direction request")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if gv.size and not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if not (np.all(np.isfinite(gf)) and np.all(np.isfinite(gv))
                and np.all(np.isfinite(gg)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite data in direction request")
        object.__setattr__(self, "grad_f", gf)
        object.__setattr__(self, "g_values", gv)
        object.__setattr__(self, "g_gradients", gg)
        object.__setattr__(self, "active", act)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.grad_f.size

    @property
    def k(self) -> int:
        return self.g_values.size


@dataclass(frozen=True)
class DirectionSolution:
    u: Array
    s: float
    multipliers: Array
    objective: float     # 0.5 ||u + grad_f||^2
    status: str          # optimal | max_iter | numerical_failure


@dataclass(frozen=True)
class ConicProgram:
    """Epigraph form over z = (u, s): quadratic objective plus two cone blocks.

    Linear block:  G_lin z <= h_lin  encodes grad_g_i' u + w_i s <= -alpha g_i.
    SOC block:     h_soc - G_soc z lies in the second-order cone, encoding
    ||u||^2 <= s through ||(u, (s-1)/2)||_2 <= (s+1)/2.
    """

    P: Array
    q: Array
    G_lin: Array
    h_lin: Array
    G_soc: Array
    h_soc: Array

    @property
    def dims(self) -> dict:
        return {"l": self.G_lin.shape[0], "q": [self.G_soc.shape[0]]}


def to_conic_form(req: DirectionRequest) -> ConicProgram:
    """Build the second-order-cone epigraph program for a direction request.

    The optimizer u of the returned program equals the unique optimizer of
    the direct QCQP; the auxiliary variable s carries ||u||^2 whenever any
    constraint is active.
    """
    n, k = req.n, req.k
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = np.eye(n)
    q = np.concatenate([req.grad_f, [0.0]])
    G_lin = np.hstack([req.g_gradients, req.weights[:, None]]) if k else np.zeros((0, n + 1))
    h_lin = -req.alpha * req.g_values
    # cone point (h - G z) = ((s+1)/2, u, (s-1)/2)
    G_soc = np.zeros((n + 2, n + 1))
    h_soc = np.zeros(n + 2)
    G_soc[0, n] = -0.5
    h_soc[0] = 0.5
    G_soc[1:n + 1, :n] = -np.eye(n)
    G_soc[n + 1, n] = -0.5
    h_soc[n + 1] = -0.5
    if not (np.all(np.isfinite(G_lin)) and np.all(np.isfinite(h_lin))):
        raise ValueError("non-finite conic data")
    return ConicProgram(P, q, G_lin, h_lin, G_soc, h_soc)


def _subproblem_residuals(gf, rows, gvals, w, alpha, u, lam):
    """(stationarity_inf, worst constraint value, dual violation, complementarity)."""
    c = rows @ u + alpha * gvals + w * (u @ u) if gvals.size else np.zeros(0)
    scale = 1.0 + 2.0 * (w @ lam) if gvals.size else 1.0
    stat_vec = scale * u + gf + (rows.T @ lam if gvals.size else 0.0)
    stat = float(np.abs(stat_vec).max()) if stat_vec.size else 0.0
    cmax = float(c.max()) if c.size else float("-inf")
    dual = float(np.maximum(-lam, 0.0).max()) if lam.size else 0.0
    comp = float(np.abs(lam * c).max()) if c.size else 0.0
    return stat, cmax, dual, comp


def verify_direction_kkt(req: DirectionRequest, sol: DirectionSolution) -> float:
    """Max residual over the four KKT blocks of the direction QCQP.

    Blocks: stationarity (infinity norm), primal feasibility max(c_i, 0),
    dual feasibility max(-lam_i, 0), and complementarity |lam_i c_i|.
    """
    stat, cmax, dual, comp = _subproblem_residuals(
        req.grad_f, req.g_gradients, req.g_values, req.weights, req.alpha,
        np.asarray(sol.u, dtype=float), np.asarray(sol.multipliers, dtype=float))
    return max(stat, max(cmax, 0.0), dual, comp)


def _solve_coneqp(prog: ConicProgram, opts) -> tuple[Array, Array]:
    G = np.vstack([prog.G_lin, prog.G_soc])
    h = np.concatenate([prog.h_lin, prog.h_soc])
    dims = {"l": prog.G_lin.shape[0], "q": [prog.G_soc.shape[0]], "s": []}
    sol = _cvxsolvers.coneqp(_cvxmat(prog.P), _cvxmat(prog.q), _cvxmat(G),
                             _cvxmat(h), dims, options=dict(opts))
    if sol["x"] is None or sol["z"] is None:
        raise ValueError("conic backend returned no iterate")
    z = np.array(sol["x"]).reshape(-1)
    lam = np.array(sol["z"]).reshape(-1)[: prog.G_lin.shape[0]]
    return z, np.maximum(lam, 0.0)


def _solve_clarabel(prog: ConicProgram) -> tuple[Array, Array]:
    k = prog.G_lin.shape[0]
    A = sp.csc_matrix(np.vstack([prog.G_lin, prog.G_soc]))
    b = np.concatenate([prog.h_lin, prog.h_soc])
    cones = [clarabel.NonnegativeConeT(k), clarabel.SecondOrderConeT(prog.G_soc.shape[0])]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 200
    solver = clarabel.DefaultSolver(sp.csc_matrix(prog.P), prog.q, A, b, cones, settings)
    out = solver.solve()
    z = np.asarray(out.x, dtype=float)
    lam = np.asarray(out.z, dtype=float)[:k]
    if not np.all(np.isfinite(z)):
        raise ValueError("rescue backend returned non-finite iterate")
    return z, np.maximum(lam, 0.0)


def _kkt_system(gf, Ga, gvals_a, wa, alpha, u_t, lam_a):
    scale = 1.0 + 2.0 * (wa @ lam_a)
    F1 = scale * u_t + gf + Ga.T @ lam_a
    F2 = Ga @ u_t + alpha * gvals_a + wa * (u_t @ u_t)
    return scale, F1, F2


def _newton_on_set(gf, Ga, gvals_a, wa, alpha, u_t, lam_a):
    """Damped Newton on the equality KKT system of one working set.

    Steps are accepted only when they shrink the residual norm; a stall
    means the working set is inconsistent (too many rows forced active)
    and the caller must revise it. Returns (u, lam, settled).
    """
    n = gf.size
    for _ in range(60):
        scale, F1, F2 = _kkt_system(gf, Ga, gvals_a, wa, alpha, u_t, lam_a)
        res = max(float(np.abs(F1).max()),
                  float(np.abs(F2).max()) if lam_a.size else 0.0)
        if res < 1e-13:
            return u_t, lam_a, True
        ka = lam_a.size
        grads = Ga + 2.0 * np.outer(wa, u_t)
        J = np.zeros((n + ka, n + ka))
        J[:n, :n] = scale * np.eye(n)
        J[:n, n:] = grads.T
        J[n:, :n] = grads
        rhs = -np.concatenate([F1, F2])
        try:
            d = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, rhs, rcond=None)[0]
        if not np.all(np.isfinite(d)):
            return u_t, lam_a, False
        phi0 = float(np.linalg.norm(rhs))
        beta = 1.0
        for _ in range(30):
            u_n = u_t + beta * d[:n]
            lam_n = lam_a + beta * d[n:]
            _, F1n, F2n = _kkt_system(gf, Ga, gvals_a, wa, alpha, u_n, lam_n)
            if float(np.linalg.norm(np.concatenate([F1n, F2n]))) <= (1.0 - 1e-4 * beta) * phi0:
                u_t, lam_a = u_n, lam_n
                break
            beta *= 0.5
        else:
            return u_t, lam_a, False
    return u_t, lam_a, False


def _polish(gf, rows, gvals, w, alpha, u, lam):
    """Active-set Newton refinement of (u, lam) to ~machine accuracy.

    Starts from the working set suggested by the raw conic multipliers and
    revises it: rows whose multiplier turns negative are dropped, violated
    rows are added one at a time, and a Newton stall (inconsistent set,
    e.g. more forced-active rows than the geometry allows) drops the row
    with the weakest multiplier. Returns None when the set never settles;
    the caller then falls back to the raw solution.
    """
    n, k = gf.size, gvals.size
    if k == 0:
        return -gf.copy(), lam
    c = rows @ u + alpha * gvals + w * (u @ u)
    lam_scale = max(1.0, float(lam.max()) if lam.size else 0.0)
    # a row enters the initial set only when its multiplier and value are
    # complementarity-consistent; raw conic multipliers carry junk on
    # clearly inactive rows that must not be forced active
    act = np.where(((lam > 1e-6 * lam_scale) & (c > -1e-6)) | (c > -1e-9))[0]
    lam_a = lam[act].copy()
    u_t = u.copy()
    seen: set = set()
    for _ in range(12 + 2 * k):
        if act.size == 0:
            u_t = -gf.copy()
            lam_a = np.zeros(0)
        else:
            u_t, lam_a, settled = _newton_on_set(
                gf, rows[act], gvals[act], w[act], alpha, u_t, lam_a)
            if not settled:
                weakest = int(np.argmin(np.abs(lam_a)))
                act = np.delete(act, weakest)
                # a stalled run can leave (u, lam) anywhere; restart the
                # revised set from the raw backend iterate
                u_t = u.copy()
                lam_a = lam[act].copy()
                continue
        # guard against revisiting a settled working set (degenerate cycling)
        key = act.tobytes()
        if key in seen:
            return None
        seen.add(key)
        neg = lam_a < -1e-10
        c_all = rows @ u_t + alpha * gvals + w * (u_t @ u_t)
        violated = c_all > 1e-12
        violated[act] = False
        if neg.any():
            act = act[~neg]
            lam_a = lam_a[~neg]
            continue
        if violated.any():
            add = int(np.argmax(np.where(violated, c_all, -np.inf)))
            act = np.append(act, add)
            lam_a = np.append(lam_a, 0.0)
            order = np.argsort(act)
            act, lam_a = act[order], lam_a[order]
            continue
        lam_full = np.zeros(k)
        lam_full[act] = np.maximum(lam_a, 0.0)
        return u_t, lam_full
    return None


def _dual_ascent_refine(gf, rows, gvals, w, alpha, lam, iters=1500):
    """Projected-gradient ascent on the Lagrangian dual from multipliers lam.

    The inner minimizer u(lam) = -(gf + rows' lam) / (1 + 2 w' lam) is
    closed form, so stationarity and dual feasibility hold exactly at every
    iterate; ascent drives primal feasibility and complementarity. Used as
    a rescue when the Newton polish cannot settle a working set (clusters
    of weakly active rows); its projected multipliers carry exact zeros,
    which also makes it a good restart point for the polish.
    """

    def eval_point(lv):
        u = -(gf + rows.T @ lv) / (1.0 + 2.0 * float(w @ lv))
        c = rows @ u + alpha * gvals + w * float(u @ u)
        val = 0.5 * float(np.sum((u + gf) ** 2)) + float(lv @ c)
        return u, c, val

    lam = np.maximum(lam, 0.0)
    u, c, val = eval_point(lam)
    t = 1.0
    for _ in range(iters):
        proj_grad = lam - np.maximum(lam + c, 0.0)
        if float(np.abs(proj_grad).max()) <= 1e-13:
            break
        lam_n = np.maximum(lam + t * c, 0.0)
        u_n, c_n, val_n = eval_point(lam_n)
        if val_n >= val + 1e-4 * float(c @ (lam_n - lam)):
            lam, u, c, val = lam_n, u_n, c_n, val_n
            t *= 1.5
        else:
            t *= 0.5
            if t < 1e-18:
                break
    return u, lam


def _scaled_request(req: DirectionRequest, sigma: float) -> DirectionRequest:
    return DirectionRequest(req.grad_f / sigma, req.g_values / sigma,
                            req.g_gradients, req.active, req.alpha,
                            req.weights * sigma)


def _attempt_ladder(prog: ConicProgram):
    """Yield (z, lam, exhausted_iterations) from each backend attempt in order."""
    for opts in _CONEQP_OPTS:
        try:
            z, lam = _solve_coneqp(prog, opts)
            yield z, lam, False
        except (ValueError, ArithmeticError):
            continue
    try:
        z, lam = _solve_clarabel(prog)
        yield z, lam, True
    except (ValueError, ArithmeticError):
        return


def solve_direction(req: DirectionRequest, tol_sub: float = DEFAULT_TOL_SUB,
                    tol_kkt: float = DEFAULT_TOL_KKT) -> DirectionSolution:
    """Solve the direction QCQP through its conic epigraph form.

    Returns status "optimal" only when the polished solution passes the
    residual gate: every constraint value <= tol_sub and KKT residual
    <= tol_kkt, both measured on data scaled by max(1, ||grad_f||). On
    persistent backend failure the status is "numerical_failure" and the
    caller decides the fallback (the outer solver doubles the weights).
    """
    n, k = req.n, req.k
    # interior fast path: -grad_f already satisfies every constraint, and it
    # minimizes the objective outright, so it is optimal with zero multipliers
    u0 = -req.grad_f
    if k == 0 or np.all(req.g_gradients @ u0 + req.alpha * req.g_values
                        + req.weights * (u0 @ u0) <= 0.0):
        return DirectionSolution(u0, float(u0 @ u0), np.zeros(k), 0.0, "optimal")

    sigma = max(1.0, float(np.linalg.norm(req.grad_f)))
    sreq = _scaled_request(req, sigma)
    prog = to_conic_form(sreq)
    gf, rows, gvals, w, alpha = (sreq.grad_f, sreq.g_gradients, sreq.g_values,
                                 sreq.weights, sreq.alpha)
    saw_iteration_cap = False
    for z, lam_raw, from_rescue in _attempt_ladder(prog):
        u_hat, lam_hat = z[:n], lam_raw
        polished = _polish(gf, rows, gvals, w, alpha, u_hat, lam_hat)
        if polished is None:
            # degenerate working set; refine multipliers by dual ascent,
            # whose exact zeros usually let a second polish settle
            u_hat, lam_hat = _dual_ascent_refine(gf, rows, gvals, w, alpha, lam_raw)
            polished = _polish(gf, rows, gvals, w, alpha, u_hat, lam_hat)
        if polished is not None:
            u_hat, lam_hat = polished
        stat, cmax, dual, comp = _subproblem_residuals(gf, rows, gvals, w, alpha,
                                                       u_hat, lam_hat)
        if cmax <= tol_sub and stat <= tol_kkt and dual <= tol_kkt and comp <= tol_kkt:
            u = sigma * u_hat
            return DirectionSolution(u, float(u @ u), sigma * lam_hat,
                                     0.5 * float(np.sum((u + req.grad_f) ** 2)),
                                     "optimal")
        saw_iteration_cap = saw_iteration_cap or from_rescue
    status = "max_iter" if saw_iteration_cap else "numerical_failure"
    return DirectionSolution(np.zeros(n), 0.0, np.zeros(k),
                             0.5 * float(req.grad_f @ req.grad_f), status)


def solve_direction_qp(req: DirectionRequest, tol_sub: float = DEFAULT_TOL_SUB,
                       tol_kkt: float = DEFAULT_TOL_KKT) -> DirectionSolution:
    """Baseline direction from the linearized QP (no quadratic correction).

    Same objective, constraints grad_g_i' u <= -alpha g_i only; the request
    weights are ignored. The returned s is ||u||^2.
    """
    n, k = req.n, req.k
    u0 = -req.grad_f
    if k == 0 or np.all(req.g_gradients @ u0 + req.alpha * req.g_values <= 0.0):
        return DirectionSolution(u0, float(u0 @ u0), np.zeros(k), 0.0, "optimal")

    sigma = max(1.0, float(np.linalg.norm(req.grad_f)))
    gf = req.grad_f / sigma
    gvals = req.g_values / sigma
    rows = req.g_gradients
    zero_w = np.zeros(k)
    saw_iteration_cap = False
    for attempt in range(3):
        try:
            if attempt < 2:
                sol = _cvxsolvers.coneqp(
                    _cvxmat(np.eye(n)), _cvxmat(gf), _cvxmat(rows),
                    _cvxmat(-req.alpha * gvals), {"l": k, "q": [], "s": []},
                    options=dict(_CONEQP_OPTS[attempt]))
                if sol["x"] is None:
                    raise ValueError("no iterate")
                u_hat = np.array(sol["x"]).reshape(-1)
                lam_hat = np.maximum(np.array(sol["z"]).reshape(-1), 0.0)
            else:
                settings = clarabel.DefaultSettings()
                settings.verbose = False
                solver = clarabel.DefaultSolver(
                    sp.csc_matrix(np.eye(n)), gf, sp.csc_matrix(rows),
                    -req.alpha * gvals, [clarabel.NonnegativeConeT(k)], settings)
                out = solver.solve()
                u_hat = np.asarray(out.x, dtype=float)
                lam_hat = np.maximum(np.asarray(out.z, dtype=float), 0.0)
                saw_iteration_cap = True
        except (ValueError, ArithmeticError):
            continue
        polished = _polish(gf, rows, gvals, zero_w, req.alpha, u_hat, lam_hat)
        if polished is not None:
            u_hat, lam_hat = polished
        stat, cmax, dual, comp = _subproblem_residuals(gf, rows, gvals, zero_w,
                                                       req.alpha, u_hat, lam_hat)
        if cmax <= tol_sub and stat <= tol_kkt and dual <= tol_kkt and comp <= tol_kkt:
            u = sigma * u_hat
            return DirectionSolution(u, float(u @ u), sigma * lam_hat,
                                     0.5 * float(np.sum((u + req.grad_f) ** 2)),
                                     "optimal")
    status = "max_iter" if saw_iteration_cap else "numerical_failure"
    return DirectionSolution(np.zeros(n), 0.0, np.zeros(k),
                             0.5 * float(req.grad_f @ req.grad_f), status)
