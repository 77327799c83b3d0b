"""Tests for the coarse-level solvers on an analytically solvable system.

The toy microscopic system is linear with one slow and one fast mode,
u' = diag(-a, -c) u with a = 0.1 and c = 10, lifted as (x, 0.3) and
restricted by u[0] + u[1].  The coarse map and the implicit flow then
have closed forms:

    P(t; x)        = e^(-a t) x + 0.3 e^(-c t)
    Phi_t(delta;x) = e^(-a delta) x + 0.3 e^(-c t) (e^(-c delta) - 1) e^(a t)

so the flow error against Phi_*(delta; x) = e^(-a delta) x decays at the
exact rate -(c - a) = -9.9 in the healing time.
"""

import numpy as np
import pytest

from efree.efcore import (ConvergenceRecord, ImplicitFlowResult, MicroSystem,
                          SolverConfig, approx_fiber_coordinates,
                          convergence_study, fit_decay_rate, implicit_flow,
                          lift_evolve_restrict, macro_flow_derivative,
                          optimal_healing_time, restriction_coordinate_flow)
from efree.errors import ConditioningError, InsufficientDataError

A_SLOW = 0.1
C_FAST = 10.0
FAST_LOAD = 0.3


def toy_system():
    return MicroSystem(
        d=1,
        lift=lambda x: np.array([float(np.atleast_1d(x)[0]), FAST_LOAD]),
        restrict=lambda u: np.array([u[0] + u[1]]),
        evolve=lambda t, u: np.array([u[0] * np.exp(-A_SLOW * t),
                                      u[1] * np.exp(-C_FAST * t)]),
        label="toy",
    )


def toy_flow(t_skip, delta, x):
    return (np.exp(-A_SLOW * delta) * x
            + FAST_LOAD * np.exp(-C_FAST * t_skip)
            * (np.exp(-C_FAST * delta) - 1.0) * np.exp(A_SLOW * t_skip))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolverConfig(fd_step=-1e-6)
    with pytest.raises(ValueError):
        SolverConfig(mode="secant")


def test_lift_evolve_restrict_rejects_negative_time():
    with pytest.raises(ValueError):
        lift_evolve_restrict(toy_system(), -0.5, np.array([1.0]))


def test_implicit_flow_matches_closed_form():
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    for t_skip in (0.0, 0.3, 1.0):
        res = implicit_flow(sys, t_skip, 0.4, np.array([0.8]), cfg)
        assert res.converged
        assert abs(res.y[0] - toy_flow(t_skip, 0.4, 0.8)) < 1e-10


def test_delta_zero_is_identity():
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    for x0 in (-1.2, 0.0, 0.8):
        res = implicit_flow(sys, 0.7, 0.0, np.array([x0]), cfg)
        assert res.converged
        assert abs(res.y[0] - x0) < 1e-10


def test_result_fields():
    res = implicit_flow(toy_system(), 0.5, 0.2, np.array([1.0]),
                        SolverConfig(tolerance=1e-12, fd_step=1e-7))
    assert isinstance(res, ImplicitFlowResult)
    assert res.residual_norm <= 1e-12
    assert res.iterations >= 1
    assert np.isfinite(res.last_correction)


def test_conditioning_error_on_degenerate_lifting():
    # lifting blind to the coordinate: the residual is nonzero (the target
    # carries extra decay) but the Newton Jacobian is identically 0
    sys = MicroSystem(
        d=1,
        lift=lambda x: np.array([1.0]),
        restrict=lambda u: np.array([u[0]]),
        evolve=lambda t, u: u * np.exp(-t),
        label="degenerate",
    )
    with pytest.raises(ConditioningError):
        implicit_flow(sys, 0.3, 0.5, np.array([2.0]),
                      SolverConfig(tolerance=1e-12, fd_step=1e-6))


def test_macro_flow_jacobian_is_linear_factor():
    # the flow is affine in x, so the Jacobian equals e^(-a delta) exactly
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    jac = macro_flow_derivative(sys, 0.8, 0.4, np.array([0.5]), 1, 1e-5, cfg)
    assert abs(jac[0, 0] - np.exp(-A_SLOW * 0.4)) < 1e-7


def test_convergence_study_rate():
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    grid = [0.1 * k for k in range(11)]
    records = convergence_study(
        sys, lambda delta, x: np.exp(-A_SLOW * delta) * np.atleast_1d(x),
        np.array([0.8]), 0.4, grid, 0, cfg)
    assert all(isinstance(r, ConvergenceRecord) and r.converged
               for r in records)
    expected = [abs(toy_flow(t, 0.4, 0.8) - np.exp(-A_SLOW * 0.4) * 0.8)
                for t in grid]
    for rec, e in zip(records, expected):
        assert abs(rec.errors[0] - e) < 1e-9
    rate = fit_decay_rate([(r.t_skip, r.errors[0]) for r in records],
                          (0.0, 1.0))
    assert abs(rate + (C_FAST - A_SLOW)) < 0.02 * (C_FAST - A_SLOW)


def test_convergence_study_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        convergence_study(toy_system(), lambda d, x: x, np.array([1.0]),
                          0.1, [0.5, 0.2], 0)


def test_fit_decay_rate_recovers_exact_exponential():
    ts = np.linspace(0.0, 2.0, 9)
    rate = fit_decay_rate(list(zip(ts, 3.0 * np.exp(-1.7 * ts))), (0.0, 2.0))
    assert abs(rate + 1.7) < 1e-10


def test_fit_decay_rate_needs_three_points():
    with pytest.raises(InsufficientDataError):
        fit_decay_rate([(0.0, 1.0), (1.0, 0.1)], (0.0, 2.0))
    # nonpositive values are dropped before counting
    with pytest.raises(InsufficientDataError):
        fit_decay_rate([(0.0, 1.0), (0.5, 0.0), (1.0, -1.0), (1.5, 0.2)],
                       (0.0, 2.0))


def test_optimal_healing_time_formula():
    assert np.isclose(optimal_healing_time(1e-3, 0.0, 10.0),
                      -np.log(1e-3) / 10.0)
    assert np.isclose(optimal_healing_time(0.01, 2.0, 8.0),
                      -np.log(0.01) / 10.0)
    with pytest.raises(ValueError):
        optimal_healing_time(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        optimal_healing_time(1.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        optimal_healing_time(0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        optimal_healing_time(0.1, -1.0, 1.0)


def test_restriction_coordinate_flow_closed_form():
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    t_skip, delta, x = 0.6, 0.4, np.array([0.9])
    out = restriction_coordinate_flow(sys, t_skip, delta, x, cfg)
    # invert P(t_skip; .) by hand, then advance to t_skip + delta
    xb = (x[0] - FAST_LOAD * np.exp(-C_FAST * t_skip)) * np.exp(
        A_SLOW * t_skip)
    expected = (np.exp(-A_SLOW * (t_skip + delta)) * xb
                + FAST_LOAD * np.exp(-C_FAST * (t_skip + delta)))
    assert abs(out[0] - expected) < 1e-10


def test_approx_fiber_coordinates_heals_fast_component():
    sys = toy_system()
    cfg = SolverConfig(tolerance=1e-13, fd_step=1e-7)
    t_skip = 1.0
    u = approx_fiber_coordinates(sys, t_skip, np.array([0.9]), cfg)
    # the returned micro state carries a healed fast component
    assert abs(u[1]) <= FAST_LOAD * np.exp(-C_FAST * t_skip) + 1e-12
    # and its defining equation P(2 t; x_g) = P(t; x) holds
    xg = u[0] * np.exp(A_SLOW * t_skip)
    lhs = lift_evolve_restrict(sys, 2 * t_skip, np.array([xg]))
    rhs = lift_evolve_restrict(sys, t_skip, np.array([0.9]))
    assert abs(lhs[0] - rhs[0]) < 1e-9
