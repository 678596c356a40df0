"""Problem library: analytic test problems and the multi-agent navigation benchmark.

The navigation instance is a single-shooting trajectory optimization: a
team of unicycles must reach goal poses while avoiding circular obstacles
and each other. States are eliminated by unrolling the dynamics from the
fixed starts, so the decision vector is the stacked input sequence and all
constraint gradients flow through the unrolled chain.

Layout conventions (time-major):
  inputs   U[2*a*t + 2*i + j],      t = 0..N-1, agent i, j in {v, w}
  states   X[3*a*(t-1) + 3*i + c],  t = 1..N,   agent i, c in {x, y, theta}
Constraint order: input boxes (4 a N), state boxes (6 a N, t = 1..N),
obstacles (len(obstacles) a N), pairwise separation (C(a,2) N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .problem import ProblemDef

Array = np.ndarray


# ---------------------------------------------------------------------------
# analytic problems

def _disk_jacobian(x, idx):
    row = np.array([[2.0 * x[0], 2.0 * x[1]]])
    return row if idx is None else row[np.asarray(idx, dtype=int)]


def _ball_linear() -> ProblemDef:
    # min x2 on the unit disk; optimum (0, -1), f* = -1
    return ProblemDef(
        n=2, m=1,
        objective=lambda x: float(x[1]),
        objective_grad=lambda x: np.array([0.0, 1.0]),
        constraints=lambda x: np.array([float(x @ x) - 1.0]),
        constraint_jacobian=_disk_jacobian,
        name="ball-linear",
        lipschitz_f=1e-6,            # linear objective; positive floor keeps the bound formula usable
        lipschitz_g=np.array([2.0]),
    )


def _box_qp() -> ProblemDef:
    # min ||x - (2,2)||^2 on the box [-1,1]^2; optimum (1,1), f* = 2
    target = np.array([2.0, 2.0])
    rows = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

    def g(x):
        return np.array([x[0] - 1.0, -1.0 - x[0], x[1] - 1.0, -1.0 - x[1]])

    def jac(x, idx):
        return rows if idx is None else rows[np.asarray(idx, dtype=int)]

    return ProblemDef(
        n=2, m=4,
        objective=lambda x: float(np.sum((x - target) ** 2)),
        objective_grad=lambda x: 2.0 * (x - target),
        constraints=g,
        constraint_jacobian=jac,
        name="box-qp",
        lipschitz_f=2.0,
        lipschitz_g=np.full(4, 1e-6),   # linear constraints, positive floor
    )


def _rosenbrock_ball() -> ProblemDef:
    # Rosenbrock objective on the disk ||x||^2 <= 2; the unconstrained
    # minimizer (1,1) sits exactly on the boundary, f* = 0
    def f(x):
        return float((1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)

    def fgrad(x):
        return np.array([
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
            200.0 * (x[1] - x[0] ** 2),
        ])

    return ProblemDef(
        n=2, m=1,
        objective=f,
        objective_grad=fgrad,
        constraints=lambda x: np.array([float(x @ x) - 2.0]),
        constraint_jacobian=_disk_jacobian,
        name="rosenbrock-ball",
    )


def analytic_suite() -> list[ProblemDef]:
    """Small problems with known optima, used as test oracles."""
    return [_ball_linear(), _box_qp(), _rosenbrock_ball()]


# optima of the analytic problems (rosenbrock-ball confirmed by a dense
# grid oracle refined with a local polish; see tests)
KNOWN_OPTIMA = {
    "ball-linear": -1.0,
    "box-qp": 2.0,
    "rosenbrock-ball": 0.0,
}


# ---------------------------------------------------------------------------
# discrete algebraic Riccati equation

@dataclass(frozen=True)
class DareInputs:
    A: Array
    B: Array
    Q: Array
    R: Array

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n, k = B.shape
        if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (k, k):
            raise ValueError("inconsistent Riccati dimensions")
        if not np.allclose(Q, Q.T) or not np.allclose(R, R.T):
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        for name, M in (("A", A), ("B", B), ("Q", Q), ("R", R)):
            object.__setattr__(self, name, M)


def solve_dare(d: DareInputs, tol: float = 1e-12, max_iter: int = 10000) -> Array:
    """Fixed-point iteration for P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA.

    Starts from P = Q; raises RuntimeError when the iteration does not
    settle within max_iter (stabilizability is not checked up front).
    """
    P = d.Q.copy()
    for _ in range(max_iter):
        BtP = d.B.T @ P
        gain = np.linalg.solve(d.R + BtP @ d.B, BtP @ d.A)
        P_next = d.Q + d.A.T @ P @ d.A - d.A.T @ P @ d.B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if np.abs(P_next - P).max() <= tol:
            return P_next
        P = P_next
    raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")


# ---------------------------------------------------------------------------
# multi-agent navigation benchmark

_STARTS4 = ((-2.0, -2.0, 0.0), (-3.0, -1.0, 0.0), (-3.0, -3.0, 0.0), (-1.0, -3.0, 0.0))
_GOALS4 = ((2.0, 3.0, 0.0), (3.0, 2.0, 0.0), (2.0, 1.0, 0.0), (1.0, 2.0, 0.0))


@dataclass(frozen=True)
class NavigationParams:
    agents: int = 4
    horizon: int = 40
    T: float = 0.03
    dx_shift: float = 0.03
    starts: tuple = _STARTS4
    goals: tuple = _GOALS4
    v_bounds: tuple = (-5.0, 12.0)
    w_bound: float = 1.5 * math.pi
    pos_bound: float = 3.7
    theta_bound: float = math.pi
    obstacles: tuple = (((-1.0, -1.0), 1.0), ((1.0, 0.0), 0.5), ((0.0, 1.0), 0.5))
    collision_radius: float = 0.25
    control_weight: float = 0.01
    terminal_P: Optional[tuple] = None   # per-agent 3x3; solved from the Riccati equation when None

    def __post_init__(self):
        if not 1 <= self.agents <= len(self.starts):
            raise ValueError(f"agents must lie in 1..{len(self.starts)}")
        if self.horizon < 1 or self.T <= 0:
            raise ValueError("horizon must be >= 1 and T > 0")
        if self.collision_radius <= 0 or any(r <= 0 for _, r in self.obstacles):
            raise ValueError("radii must be positive")
        if self.v_bounds[0] >= self.v_bounds[1]:
            raise ValueError("empty speed interval")

    @property
    def n_inputs(self) -> int:
        return 2 * self.agents * self.horizon

    def constraint_count(self) -> int:
        a, N = self.agents, self.horizon
        pairs = a * (a - 1) // 2
        return 4 * a * N + 6 * a * N + len(self.obstacles) * a * N + pairs * N


def _linearized_goal_dynamics(T: float) -> tuple[Array, Array]:
    # Jacobians of the unicycle step at the goal pose (theta = 0, v = 1)
    A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, T], [0.0, 0.0, 1.0]])
    B = np.array([[T, 0.0], [0.0, 0.0], [0.0, T]])
    return A, B


def default_terminal_weight(T: float) -> Array:
    A, B = _linearized_goal_dynamics(T)
    return solve_dare(DareInputs(A, B, np.eye(3), 0.01 * np.eye(2)))


def unroll_dynamics(params: NavigationParams, U) -> Array:
    """Roll the unicycle model forward from the fixed starts.

    U is the stacked input vector (length 2*agents*horizon); the result
    stacks the states at t = 1..horizon (length 3*agents*horizon).
    """
    a, N = params.agents, params.horizon
    Uv = np.asarray(U, dtype=float).reshape(-1)
    if Uv.size != 2 * a * N:
        raise ValueError(f"expected {2 * a * N} inputs, got {Uv.size}")
    st = _roll_states(params, Uv.reshape(N, a, 2))
    return st[1:].reshape(-1)


def _roll_states(params: NavigationParams, Useq: Array) -> Array:
    """States (horizon+1, agents, 3) for inputs (horizon, agents, 2)."""
    a, N, T, dx = params.agents, params.horizon, params.T, params.dx_shift
    st = np.empty((N + 1, a, 3))
    st[0] = np.asarray(params.starts[:a], dtype=float)
    for t in range(N):
        v, w = Useq[t, :, 0], Useq[t, :, 1]
        th = st[t, :, 2]
        st[t + 1, :, 0] = st[t, :, 0] + v * T * np.cos(th) - dx
        st[t + 1, :, 1] = st[t, :, 1] + v * T * np.sin(th)
        st[t + 1, :, 2] = th + w * T
    return st


def _sensitivities(params: NavigationParams, Useq: Array, st: Array) -> Array:
    """S[t, i] = d X_i(t) / d U_i as a (N+1, agents, 3, 2N) stack."""
    a, N, T = params.agents, params.horizon, params.T
    S = np.zeros((N + 1, a, 3, 2 * N))
    for t in range(N):
        v = Useq[t, :, 0]
        th = st[t, :, 2]
        sin, cos = np.sin(th), np.cos(th)
        S[t + 1] = S[t]
        # chain rule through theta
        S[t + 1, :, 0, :] += (-v * T * sin)[:, None] * S[t, :, 2, :]
        S[t + 1, :, 1, :] += (v * T * cos)[:, None] * S[t, :, 2, :]
        # direct input injection
        S[t + 1, :, 0, 2 * t] += T * cos
        S[t + 1, :, 1, 2 * t] += T * sin
        S[t + 1, :, 2, 2 * t + 1] += T
    return S


class _Memo:
    """Tiny FIFO memo keyed by the raw bytes of the input vector."""

    def __init__(self, maxlen: int):
        self.maxlen = maxlen
        self.data: dict = {}

    def get(self, key):
        return self.data.get(key)

    def put(self, key, value):
        if len(self.data) >= self.maxlen:
            self.data.pop(next(iter(self.data)))
        self.data[key] = value
        return value


def make_navigation_problem(params: NavigationParams = NavigationParams()) -> ProblemDef:
    """Build the navigation instance as a smooth program over the inputs.

    Objective: sum over t = 0..N-1 of per-agent squared deviation from the
    goal pose plus control_weight times squared deviation from the cruise
    input (1, 0), plus a terminal quadratic with the Riccati weight.
    Constraints in the documented order; gradients are exact, computed by
    reverse accumulation (objective) and forward sensitivities (rows).
    """
    a, N, T = params.agents, params.horizon, params.T
    n = params.n_inputs
    m = params.constraint_count()
    goals = np.asarray(params.goals[:a], dtype=float)
    if params.terminal_P is None:
        P_terms = [default_terminal_weight(T)] * a
    else:
        P_terms = [np.asarray(P, dtype=float) for P in params.terminal_P]
        if len(P_terms) != a or any(Pm.shape != (3, 3) for Pm in P_terms):
            raise ValueError("terminal_P must provide one 3x3 matrix per agent")
        for Pm in P_terms:
            if not np.allclose(Pm, Pm.T) or np.linalg.eigvalsh(Pm).min() <= 0:
                raise ValueError("terminal weights must be symmetric positive definite")
    P_stack = np.stack(P_terms)
    U_ref = np.array([1.0, 0.0])
    v_lo, v_hi = params.v_bounds
    obs_c = np.asarray([c for c, _ in params.obstacles], dtype=float)
    obs_r2 = np.asarray([r * r for _, r in params.obstacles], dtype=float)
    n_obs = len(params.obstacles)
    pairs = list(combinations(range(a), 2))

    # global column indices of agent i's own inputs, local order (t, {v,w})
    colmap = np.empty((a, 2 * N), dtype=int)
    for i in range(a):
        for t in range(N):
            colmap[i, 2 * t] = 2 * a * t + 2 * i
            colmap[i, 2 * t + 1] = 2 * a * t + 2 * i + 1

    states_memo = _Memo(64)
    sens_memo = _Memo(8)

    def _states(Uv: Array) -> Array:
        key = Uv.tobytes()
        hit = states_memo.get(key)
        if hit is not None:
            return hit
        return states_memo.put(key, _roll_states(params, Uv.reshape(N, a, 2)))

    def _sens(Uv: Array, st: Array) -> Array:
        key = Uv.tobytes()
        hit = sens_memo.get(key)
        if hit is not None:
            return hit
        return sens_memo.put(key, _sensitivities(params, Uv.reshape(N, a, 2), st))

    def objective(Uv: Array) -> float:
        Useq = Uv.reshape(N, a, 2)
        st = _states(Uv)
        dev = st[:N] - goals          # stage states t = 0..N-1
        du = Useq - U_ref
        stage = float(np.sum(dev ** 2)) + params.control_weight * float(np.sum(du ** 2))
        zN = st[N] - goals
        term = float(np.einsum("ic,icd,id->", zN, P_stack, zN))
        return stage + term

    def objective_grad(Uv: Array) -> Array:
        Useq = Uv.reshape(N, a, 2)
        st = _states(Uv)
        grad = np.zeros((N, a, 2))
        grad += 2.0 * params.control_weight * (Useq - U_ref)
        # adjoint sweep: mu[t] = dJ/d st[t], injected into each input via B_t
        mu = 2.0 * np.einsum("icd,id->ic", P_stack, st[N] - goals)
        for t in range(N - 1, -1, -1):
            v = Useq[t, :, 0]
            th = st[t, :, 2]
            sin, cos = np.sin(th), np.cos(th)
            grad[t, :, 0] += T * (cos * mu[:, 0] + sin * mu[:, 1])
            grad[t, :, 1] += T * mu[:, 2]
            mu_prev = mu.copy()
            mu = np.empty_like(mu_prev)
            mu[:, 0] = mu_prev[:, 0]
            mu[:, 1] = mu_prev[:, 1]
            mu[:, 2] = (-v * T * sin) * mu_prev[:, 0] + (v * T * cos) * mu_prev[:, 1] \
                + mu_prev[:, 2]
            if t > 0:
                mu += 2.0 * (st[t] - goals)
        return grad.reshape(-1)

    def constraints(Uv: Array) -> Array:
        Useq = Uv.reshape(N, a, 2)
        st = _states(Uv)
        out = np.empty(m)
        # input boxes, order (t, agent, [v_hi, v_lo, w_hi, w_lo])
        f1 = np.empty((N, a, 4))
        f1[:, :, 0] = Useq[:, :, 0] - v_hi
        f1[:, :, 1] = v_lo - Useq[:, :, 0]
        f1[:, :, 2] = Useq[:, :, 1] - params.w_bound
        f1[:, :, 3] = -params.w_bound - Useq[:, :, 1]
        pos = 4 * a * N
        out[:pos] = f1.reshape(-1)
        # state boxes at t = 1..N
        sx = st[1:]
        f2 = np.empty((N, a, 6))
        f2[:, :, 0] = sx[:, :, 0] - params.pos_bound
        f2[:, :, 1] = -params.pos_bound - sx[:, :, 0]
        f2[:, :, 2] = sx[:, :, 1] - params.pos_bound
        f2[:, :, 3] = -params.pos_bound - sx[:, :, 1]
        f2[:, :, 4] = sx[:, :, 2] - params.theta_bound
        f2[:, :, 5] = -params.theta_bound - sx[:, :, 2]
        out[pos:pos + 6 * a * N] = f2.reshape(-1)
        pos += 6 * a * N
        # obstacle clearance r^2 - ||p - c||^2 <= 0
        d = sx[:, :, None, :2] - obs_c[None, None, :, :]
        f3 = obs_r2[None, None, :] - np.sum(d ** 2, axis=3)
        out[pos:pos + n_obs * a * N] = f3.reshape(-1)
        pos += n_obs * a * N
        # pairwise separation
        if pairs:
            ii = [i for i, _ in pairs]
            jj = [j for _, j in pairs]
            diff = sx[:, ii, :2] - sx[:, jj, :2]
            f4 = params.collision_radius ** 2 - np.sum(diff ** 2, axis=2)
            out[pos:] = f4.reshape(-1)
        return out

    F1, F2, F3 = 4 * a * N, 6 * a * N, n_obs * a * N

    def constraint_jacobian(Uv: Array, idx) -> Array:
        Useq = Uv.reshape(N, a, 2)
        st = _states(Uv)
        indices = np.arange(m) if idx is None else np.asarray(idx, dtype=int).reshape(-1)
        rows = np.zeros((indices.size, n))
        need_sens = np.any(indices >= F1)
        S = _sens(Uv, st) if need_sens else None
        box_sign = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        box_comp = np.array([0, 0, 1, 1, 2, 2])
        for r, gidx in enumerate(indices):
            if gidx < F1:
                t, rem = divmod(int(gidx), 4 * a)
                i, b = divmod(rem, 4)
                col = 2 * a * t + 2 * i + (0 if b < 2 else 1)
                rows[r, col] = 1.0 if b % 2 == 0 else -1.0
            elif gidx < F1 + F2:
                q = int(gidx) - F1
                t, rem = divmod(q, 6 * a)
                i, b = divmod(rem, 6)
                rows[r, colmap[i]] = box_sign[b] * S[t + 1, i, box_comp[b]]
            elif gidx < F1 + F2 + F3:
                q = int(gidx) - F1 - F2
                t, rem = divmod(q, n_obs * a)
                i, o = divmod(rem, n_obs)
                d = st[t + 1, i, :2] - obs_c[o]
                rows[r, colmap[i]] = -2.0 * (d[0] * S[t + 1, i, 0] + d[1] * S[t + 1, i, 1])
            else:
                q = int(gidx) - F1 - F2 - F3
                t, pr = divmod(q, len(pairs))
                i, j = pairs[pr]
                d = st[t + 1, i, :2] - st[t + 1, j, :2]
                rows[r, colmap[i]] = -2.0 * (d[0] * S[t + 1, i, 0] + d[1] * S[t + 1, i, 1])
                rows[r, colmap[j]] = 2.0 * (d[0] * S[t + 1, j, 0] + d[1] * S[t + 1, j, 1])
        return rows

    return ProblemDef(
        n=n, m=m,
        objective=objective,
        objective_grad=objective_grad,
        constraints=constraints,
        constraint_jacobian=constraint_jacobian,
        name=f"nav-a{a}-N{N}",
    )


def navigation_start(params: NavigationParams) -> Array:
    """Cruise inputs v=1, w=0: every trajectory stays at its start pose."""
    U = np.zeros((params.horizon, params.agents, 2))
    U[:, :, 0] = 1.0
    return U.reshape(-1)


# ---------------------------------------------------------------------------
# registry

PROBLEM_KEYS = ("ball-linear", "box-qp", "rosenbrock-ball", "nav")


def get_problem(key: str, **params) -> tuple[ProblemDef, Array]:
    """Look up a registered problem and its default start point.

    `nav` accepts agents, horizon and dmin keyword parameters and defaults
    to the full four-agent, forty-step instance.
    """
    if key == "nav":
        nav_params = NavigationParams(
            agents=int(params.pop("agents", 4)),
            horizon=int(params.pop("horizon", 40)),
            collision_radius=float(params.pop("dmin", 0.25)),
        )
        if params:
            raise TypeError(f"unknown nav parameters: {sorted(params)}")
        return make_navigation_problem(nav_params), navigation_start(nav_params)
    if params:
        raise TypeError(f"problem {key!r} takes no parameters")
    for p in analytic_suite():
        if p.name == key:
            return p, np.zeros(2)
    raise KeyError(f"unknown problem {key!r}; registered: {', '.join(PROBLEM_KEYS)}")
