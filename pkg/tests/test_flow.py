"""Euler integration of the direction field: invariance and energy certificates."""

import numpy as np
import pytest

from safeqcqp import bench
from safeqcqp.flow import FlowBreachError, FlowTrace, integrate_flow
from safeqcqp.problem import ProblemDef
from safeqcqp.solver import SolverConfig


def _slide_problem():
    # minimize the first coordinate on the unit disk; the flow from the
    # bottom of the disk slides along the curved boundary, which is exactly
    # the regime where a coarse Euler step must overshoot
    return ProblemDef(
        n=2, m=1,
        objective=lambda x: float(x[0]),
        objective_grad=lambda x: np.array([1.0, 0.0]),
        constraints=lambda x: np.array([float(x @ x) - 1.0]),
        constraint_jacobian=lambda x, idx: 2.0 * x.reshape(1, 2),
    )


def _free_quadratic():
    return ProblemDef(
        n=1, m=0,
        objective=lambda x: 0.5 * float(x @ x),
        objective_grad=lambda x: np.asarray(x, dtype=float),
        constraints=lambda x: np.zeros(0),
        constraint_jacobian=lambda x, idx: np.zeros((0, 1)),
    )


class TestValidation:
    def test_nonpositive_h(self):
        with pytest.raises(ValueError):
            integrate_flow(_free_quadratic(), [1.0], h=0.0, T=1.0)

    def test_nonpositive_T(self):
        with pytest.raises(ValueError):
            integrate_flow(_free_quadratic(), [1.0], h=0.1, T=-1.0)


class TestUnconstrainedGradientFlow:
    def test_states_match_closed_form(self):
        # x' = -x discretized with h = 1/2 gives exactly 2^-j (dyadic, so
        # the float arithmetic is exact)
        tr = integrate_flow(_free_quadratic(), [1.0], h=0.5, T=5.0)
        assert tr.times.shape == (11,)
        expected = 0.5 ** np.arange(11)
        assert np.array_equal(tr.states.ravel(), expected)
        assert np.array_equal(tr.u_norm_sq, expected ** 2)

    def test_energy_identity(self):
        tr = integrate_flow(_free_quadratic(), [1.0], h=1e-3, T=8.0)
        drop = tr.f_values[0] - tr.f_values[-1]
        # for pure gradient flow the bound is tight: 1/2 int ||u||^2 = drop/2... no,
        # ||u||^2 = -df/dt exactly, so the half-integral is half the drop
        assert tr.integral_half_u_sq == pytest.approx(0.5 * drop, rel=1e-3)


class TestConstrainedFlow:
    def test_ball_certificates(self):
        p, x0 = bench.get_problem("ball-linear")
        tr = integrate_flow(p, x0, h=0.01, T=2.0)
        assert isinstance(tr, FlowTrace)
        assert tr.times[-1] == pytest.approx(2.0)
        assert tr.states.shape == (201, 2)
        # start at the origin: interior, so the field is exactly -grad f
        assert tr.u_norm_sq[0] == 1.0
        # objective never increases along the trajectory
        assert np.all(np.diff(tr.f_values) <= 1e-12)
        # trajectory stays strictly inside the disk at this step size
        worst = max(float(np.max(p.constraints(s))) for s in tr.states)
        assert worst <= 0.0
        # energy certificate: half the control energy is dominated by the
        # objective drop (df/dt <= -||u||^2 along the field)
        drop = tr.f_values[0] - tr.f_values[-1]
        assert tr.integral_half_u_sq <= drop + 1e-9
        assert tr.integral_half_u_sq > 0.0

    def test_boundary_slide_stays_feasible_at_fine_step(self):
        tr = integrate_flow(_slide_problem(), [0.0, -1.0], h=1e-3, T=0.5)
        worst = max(float(_slide_problem().constraints(s)[0]) for s in tr.states)
        assert worst <= 1e-9
        assert np.all(np.diff(tr.f_values) <= 1e-12)

    def test_coarse_step_raises_breach(self):
        # h = 0.2 overshoots the curved boundary by ~4e-2 on the first step
        with pytest.raises(FlowBreachError, match="breach"):
            integrate_flow(_slide_problem(), [0.0, -1.0], h=0.2, T=1.0)

    def test_breach_tol_can_admit_overshoot(self):
        tr = integrate_flow(_slide_problem(), [0.0, -1.0], h=0.2, T=0.2,
                            breach_tol=0.05)
        assert tr.states.shape[0] == 2

    def test_infeasible_start_is_a_breach(self):
        with pytest.raises(FlowBreachError):
            integrate_flow(_slide_problem(), [2.0, 0.0], h=0.01, T=0.1)

    def test_weight_comes_from_config(self):
        # huge curvature weight shrinks the admissible field near the
        # boundary, so the trajectory ends higher than with the default
        p, x0 = bench.get_problem("ball-linear")
        light = integrate_flow(p, x0, h=0.01, T=2.0)
        heavy = integrate_flow(p, x0, h=0.01, T=2.0,
                               cfg=SolverConfig(w_floor=5.0))
        assert heavy.f_values[-1] > light.f_values[-1]
