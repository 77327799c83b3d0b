"""Fixed-step deterministic ODE integration and finite-difference derivatives.

The integrator is the fifth-order solution of the Dormand-Prince 5(4)
embedded Runge-Kutta pair, run with a fixed step size.  There is no step
size control and no dense output: all deterministic backends evaluate
endpoint states only, and a fixed step keeps results bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EvolutionError

__all__ = ["OdeSystem", "StepperConfig", "dopri5_fixed", "central_jacobian"]


@dataclass
class OdeSystem:
    """Autonomous ODE u' = rhs(u) of the given dimension."""

    dimension: int
    rhs: callable


@dataclass
class StepperConfig:
    """Fixed step size for dopri5_fixed."""

    step_size: float = 0.1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


# Dormand-Prince coefficients (Hairer/Norsett/Wanner, Solving ODEs I, p.178).
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
# 5th-order weights (the b row of the 5th-order component).
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)


def _dopri5_step(rhs, u, h):
    k1 = rhs(u)
    k2 = rhs(u + h * (_A[1][0] * k1))
    k3 = rhs(u + h * (_A[2][0] * k1 + _A[2][1] * k2))
    k4 = rhs(u + h * (_A[3][0] * k1 + _A[3][1] * k2 + _A[3][2] * k3))
    k5 = rhs(u + h * (_A[4][0] * k1 + _A[4][1] * k2 + _A[4][2] * k3
                      + _A[4][3] * k4))
    k6 = rhs(u + h * (_A[5][0] * k1 + _A[5][1] * k2 + _A[5][2] * k3
                      + _A[5][3] * k4 + _A[5][4] * k5))
    return u + h * (_B5[0] * k1 + _B5[2] * k3 + _B5[3] * k4
                    + _B5[4] * k5 + _B5[5] * k6)


def dopri5_fixed(sys, u0, t_span, cfg):
    """Integrate sys from t_span[0] to t_span[1] with fixed step size.

    The interval is covered with full steps of cfg.step_size; a final
    shortened step lands exactly on the right endpoint.  Raises
    EvolutionError if the state becomes non-finite.
    """
    t0, t1 = t_span
    if t1 < t0:
        raise ValueError("t_span must satisfy t1 >= t0")
    u = np.asarray(u0, dtype=float).copy()
    h = cfg.step_size
    total = t1 - t0
    if total == 0.0:
        return u
    n_full = int(total / h)
    # guard against the float division landing just below an integer
    if (n_full + 1) * h <= total * (1 + 1e-12):
        n_full += 1
    rhs = sys.rhs
    for i in range(n_full):
        u = _dopri5_step(rhs, u, h)
        if not np.all(np.isfinite(u)):
            raise EvolutionError(
                f"non-finite state at step {i + 1} (t = {t0 + (i + 1) * h:g})",
                time=t0 + (i + 1) * h)
    rest = total - n_full * h
    if rest > 1e-14 * max(1.0, abs(total)):
        u = _dopri5_step(rhs, u, rest)
        if not np.all(np.isfinite(u)):
            raise EvolutionError(f"non-finite state in final step (t = {t1:g})",
                                 time=t1)
    return u


def central_jacobian(f, x, step):
    """Central finite-difference Jacobian J[i, j] = d f_i / d x_j."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        fp = np.asarray(f(x + e), dtype=float)
        fm = np.asarray(f(x - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvolutionError(
                f"non-finite function value at stencil point x ± step*e_{j}")
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)
