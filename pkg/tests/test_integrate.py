"""Tests for the fixed-step integrator and finite-difference helpers."""

import numpy as np
import pytest

from efree.errors import EvolutionError
from efree.integrate import (OdeSystem, StepperConfig, central_jacobian,
                             dopri5_fixed)


def test_stepper_config_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        StepperConfig(0.0)
    with pytest.raises(ValueError):
        StepperConfig(-0.1)


def test_zero_interval_returns_initial_state():
    sys = OdeSystem(1, lambda u: -u)
    u0 = np.array([0.7])
    out = dopri5_fixed(sys, u0, (2.0, 2.0), StepperConfig(0.1))
    assert np.array_equal(out, u0)


def test_reversed_interval_raises():
    sys = OdeSystem(1, lambda u: -u)
    with pytest.raises(ValueError):
        dopri5_fixed(sys, [1.0], (1.0, 0.0), StepperConfig(0.1))


def test_linear_decay_close_to_exact():
    sys = OdeSystem(1, lambda u: -u)
    out = dopri5_fixed(sys, [1.0], (0.0, 1.0), StepperConfig(0.01))
    assert abs(out[0] - np.exp(-1.0)) < 1e-12


def test_final_shortened_step_lands_on_endpoint():
    # t = 0.25 with h = 0.1 needs two full steps plus a 0.05 step
    sys = OdeSystem(1, lambda u: u)
    out = dopri5_fixed(sys, [1.0], (0.0, 0.25), StepperConfig(0.1))
    assert abs(out[0] - np.exp(0.25)) < 1e-8


def test_observed_order_at_least_four_and_a_half():
    # nonlinear scalar problem u' = u^2 with known solution 1/(1 - t)
    sys = OdeSystem(1, lambda u: u * u)
    t_end = 0.5
    exact = 1.0 / (1.0 - t_end)
    errs = []
    steps = [0.05, 0.025, 0.0125, 0.00625]
    for h in steps:
        out = dopri5_fixed(sys, [1.0], (0.0, t_end), StepperConfig(h))
        errs.append(abs(out[0] - exact))
    order, _ = np.polyfit(np.log(steps), np.log(errs), 1)
    assert order >= 4.5


def test_two_dimensional_oscillator():
    sys = OdeSystem(2, lambda u: np.array([u[1], -u[0]]))
    out = dopri5_fixed(sys, [1.0, 0.0], (0.0, np.pi / 2), StepperConfig(0.01))
    assert np.allclose(out, [0.0, -1.0], atol=1e-10)


def test_nonfinite_state_raises_evolution_error():
    # finite-time blow-up of u' = u^2 past t = 1
    sys = OdeSystem(1, lambda u: u * u)
    with pytest.raises(EvolutionError):
        dopri5_fixed(sys, [1.0], (0.0, 2.0), StepperConfig(0.1))


def test_central_jacobian_matches_analytic():
    def f(x):
        return np.array([x[0] ** 2 + x[1], np.sin(x[1])])

    x = np.array([0.3, -0.2])
    jac = central_jacobian(f, x, 1e-6)
    expected = np.array([[2 * x[0], 1.0], [0.0, np.cos(x[1])]])
    assert np.allclose(jac, expected, atol=1e-8)


def test_central_jacobian_nonfinite_raises():
    def f(x):
        with np.errstate(invalid="ignore"):
            return np.sqrt(x)

    with pytest.raises(EvolutionError):
        central_jacobian(f, np.array([1e-7]), 1e-6)
