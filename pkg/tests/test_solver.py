"""Outer solver loops: screening, weight adaptation, termination, trace integrity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from safeqcqp import bench
from safeqcqp.problem import ProblemDef, check_feasibility
from safeqcqp.solver import (
    InfeasibleStartError,
    SolverConfig,
    qp_baseline,
    select_active_set,
    ss_qcqp,
    ss_qcqp_as,
    update_w,
)


def _ball():
    return bench.analytic_suite()[0]


def _half_line():
    # min x s.t. -x <= 0; the start x = 0 is already a stationary point
    return ProblemDef(
        n=1, m=1,
        objective=lambda x: float(x[0]),
        objective_grad=lambda x: np.array([1.0]),
        constraints=lambda x: np.array([-float(x[0])]),
        constraint_jacobian=lambda x, idx: (np.array([[-1.0]]) if idx is None
                                            else np.array([[-1.0]])[np.asarray(idx, int)]),
    )


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.alpha == 1.0
        assert cfg.gamma == 0.1
        assert cfg.epsilon == 1e-5
        assert cfg.feas_tol == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(alpha=0.0)
        with pytest.raises(ValueError):
            SolverConfig(gamma=1.0)
        with pytest.raises(ValueError):
            SolverConfig(q_percent=101.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iter=0)


class TestSelectActiveSet:
    def test_delta_only(self):
        assert select_active_set([-0.1, -0.7, -2.0], 0.5, 0.0).tolist() == [0]

    def test_quantile_union(self):
        # ceil(34 * 3 / 100) = 2 top values, union with the delta set
        assert select_active_set([-0.1, -0.7, -2.0], 0.5, 34.0).tolist() == [0, 1]

    def test_tie_break_lower_index(self):
        assert select_active_set([-1.0, -1.0, -1.0], 0.5, 34.0).tolist() == [0, 1]

    def test_everything_active(self):
        assert select_active_set([0.0, -0.1], 0.5, 0.0).tolist() == [0, 1]

    def test_empty(self):
        assert select_active_set([-2.0, -3.0], 0.5, 0.0).size == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            select_active_set([0.0], 0.0, 5.0)
        with pytest.raises(ValueError):
            select_active_set([0.0], 0.5, -1.0)

    @given(hnp.arrays(np.float64, st.integers(1, 30),
                      elements=st.floats(-5, 5)),
           st.floats(0.01, 3.0), st.floats(0.0, 100.0))
    @settings(max_examples=80, deadline=None)
    def test_superset_and_count_properties(self, g, delta, q):
        sel = select_active_set(g, delta, q)
        # always contains the whole delta-active set
        for i in np.where(g >= -delta)[0]:
            assert i in sel
        # and at least the quantile count when q > 0
        want = int(np.ceil(q * g.size / 100.0)) if q > 0 else 0
        assert sel.size >= want
        # sorted unique indices
        assert np.array_equal(sel, np.unique(sel))


class TestUpdateW:
    def test_known_quadratic(self):
        # g = ||x||^2 - 1 moving (0,0) -> (1,0): gradient change (2,0), so
        # the curvature estimate is exactly 1 = L/2
        w = update_w([1e-3], [0.0, 0.0], [1.0, 0.0], [[0.0, 0.0]], [[2.0, 0.0]])
        assert w[0] == pytest.approx(1.0)

    def test_linear_constraint_keeps_weight(self):
        w = update_w([0.7], [0.0, 0.0], [1.0, 1.0], [[3.0, -1.0]], [[3.0, -1.0]])
        assert w[0] == 0.7

    def test_zero_displacement_rejected(self):
        with pytest.raises(ValueError, match="displacement"):
            update_w([1e-3], [1.0, 1.0], [1.0, 1.0], [[0.0, 0.0]], [[0.0, 0.0]])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_nondecreasing(self, seed):
        rng = np.random.default_rng(seed)
        m, n = 4, 3
        w = np.abs(rng.standard_normal(m)) + 1e-6
        xp = rng.standard_normal(n)
        xn = xp + rng.standard_normal(n) * 0.1
        if np.array_equal(xp, xn):
            return
        out = update_w(w, xp, xn, rng.standard_normal((m, n)),
                       rng.standard_normal((m, n)))
        assert np.all(out >= w)


class TestFullSolver:
    def test_ball_converges_to_known_optimum(self):
        res = ss_qcqp(*bench.get_problem("ball-linear"))
        assert res.status == "converged"
        assert np.abs(res.x_final - np.array([0.0, -1.0])).max() < 1e-4
        assert res.trace[-1].f == pytest.approx(-1.0, abs=1e-6)
        assert res.final_kkt.max_component <= 1e-4

    def test_stationary_start_exits_immediately(self):
        res = ss_qcqp(_half_line(), [0.0])
        assert res.status == "converged"
        assert len(res.trace) == 1
        assert res.trace[0].step == 0.0
        assert res.x_final[0] == 0.0
        assert res.multipliers[0] == pytest.approx(1.0, abs=1e-6)

    def test_infeasible_start_raises(self):
        with pytest.raises(InfeasibleStartError):
            ss_qcqp(_ball(), [2.0, 0.0])

    def test_feas_tol_admits_marginal_start(self):
        cfg = SolverConfig(feas_tol=1e-6)
        res = ss_qcqp(_ball(), [0.0, -1.0000000001], cfg)
        assert res.status == "converged"

    def test_box_multipliers_zero_extended(self):
        p, x0 = bench.get_problem("box-qp")
        res = ss_qcqp(p, x0)
        assert res.status == "converged"
        assert res.multipliers.shape == (4,)
        # x* = (1,1): upper bounds active with lam = 2, lower bounds inactive
        assert res.multipliers[0] == pytest.approx(2.0, abs=1e-3)
        assert res.multipliers[1] == pytest.approx(0.0, abs=1e-6)
        assert res.multipliers[2] == pytest.approx(2.0, abs=1e-3)
        assert res.multipliers[3] == pytest.approx(0.0, abs=1e-6)

    def test_max_iter_status_and_trace_length(self):
        p, x0 = bench.get_problem("rosenbrock-ball")
        res = ss_qcqp(p, x0, SolverConfig(max_iter=3))
        assert res.status == "max_iter"
        assert len(res.trace) == 3

    def test_trace_integrity(self):
        p, x0 = bench.get_problem("rosenbrock-ball")
        res = ss_qcqp(p, x0, SolverConfig(max_iter=50))
        ks = [r.k for r in res.trace]
        assert ks == list(range(len(res.trace)))
        for r in res.trace:
            assert r.wall_ns > 0
            assert r.active_count == 1
            assert r.max_g <= 0.0
        assert res.subproblem_ns > 0

    def test_monotone_descent_and_feasibility_short_run(self):
        p, x0 = bench.get_problem("rosenbrock-ball")
        cfg = SolverConfig(max_iter=200)
        res = ss_qcqp(p, x0, cfg)
        fs = [r.f for r in res.trace]
        assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))
        assert max(r.max_g for r in res.trace) <= 1e-9


class TestActiveSetSolver:
    def test_same_optimum_as_full(self):
        p, x0 = bench.get_problem("box-qp")
        full = ss_qcqp(p, x0)
        scr = ss_qcqp_as(p, x0)
        assert scr.status == "converged"
        assert np.abs(scr.x_final - full.x_final).max() < 1e-4

    def test_screened_counts_never_exceed_m(self):
        p, x0 = bench.get_problem("nav", agents=2, horizon=10)
        res = ss_qcqp_as(p, x0, SolverConfig(max_iter=40))
        assert all(r.active_count <= p.m for r in res.trace)
        assert any(r.active_count < p.m for r in res.trace)

    def test_feasibility_maintained_under_screening(self):
        p, x0 = bench.get_problem("nav", agents=2, horizon=10)
        res = ss_qcqp_as(p, x0, SolverConfig(max_iter=40))
        assert max(r.max_g for r in res.trace) <= 1e-9


class TestQpBaseline:
    def test_tangent_direction_stalls_on_curved_boundary(self):
        # from a boundary point of the disk the linearized direction is
        # tangent, so the backtracker burns ~27 halvings per iteration to
        # find steps whose violation rounds away, and progress is negligible
        res = qp_baseline(_ball(), [1.0, 0.0], SolverConfig(max_iter=50))
        assert res.status == "max_iter"
        assert res.trace[-1].f > -1e-3
        assert all(r.halvings >= 20 for r in res.trace)
        assert max(r.max_g for r in res.trace) <= 0.0
        # same start, curvature-aware direction: solved in a few dozen steps
        ref = ss_qcqp(_ball(), [1.0, 0.0])
        assert ref.status == "converged"
        assert ref.trace[-1].f == pytest.approx(-1.0, abs=1e-6)

    def test_box_problem_fine_with_linear_constraints(self):
        # flat boundaries have no curvature for the QP direction to miss
        p, x0 = bench.get_problem("box-qp")
        res = qp_baseline(p, x0)
        assert res.status == "converged"
        assert np.abs(res.x_final - np.array([1.0, 1.0])).max() < 1e-4


class TestWeightAdaptation:
    def test_adaptive_off_keeps_floor(self):
        p, x0 = bench.get_problem("ball-linear")
        cfg = SolverConfig(adaptive_w=False, w_floor=1.0)
        res = ss_qcqp(p, x0, cfg)
        assert res.status == "converged"

    def test_adaptive_run_converges_with_tiny_floor(self):
        # the curvature tracker must rescue a floor far below L/2
        p, x0 = bench.get_problem("ball-linear")
        res = ss_qcqp(p, x0, SolverConfig(w_floor=1e-8))
        assert res.status == "converged"
        assert max(r.max_g for r in res.trace) <= 1e-9
