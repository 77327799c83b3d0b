"""Model-agnostic core: lift-evolve-restrict maps and implicit coarse flows.

A backend supplies lifting, restriction and microscopic evolution through a
MicroSystem record.  On top of that this module builds the coarse
time-t map P(t; x) = restrict(evolve(t, lift(x))), the implicitly defined
coarse flow with healing time (the solution y of
P(t_skip; y) = P(t_skip + delta; x)), finite-difference derivatives of the
coarse flow, and the drivers for healing-time convergence studies.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, InsufficientDataError, SolverError
from .integrate import central_jacobian

__all__ = [
    "MicroSystem", "SolverConfig", "ImplicitFlowResult", "ConvergenceRecord",
    "lift_evolve_restrict", "implicit_flow", "macro_flow_derivative",
    "convergence_study", "fit_decay_rate", "optimal_healing_time",
    "restriction_coordinate_flow", "approx_fiber_coordinates",
]

_COND_LIMIT = 1e12


@dataclass
class MicroSystem:
    """Capability record for one model backend.

    lift maps a coarse vector (length d) into the microscopic state space,
    restrict maps back, and evolve(t, u) runs the microscopic dynamics for
    time t >= 0.  Backends with an explicitly known slow map may supply
    pstar(t, x) and pstar_inverse(t, b, guess); these enable the
    fixed-point solver mode of implicit_flow (guess is the current iterate,
    a warm start for backends whose inverse is itself iterative).
    """

    d: int
    lift: callable
    restrict: callable
    evolve: callable
    label: str = ""
    pstar: callable = None
    pstar_inverse: callable = None


@dataclass
class SolverConfig:
    tolerance: float = 1e-9
    max_iterations: int = 50
    damping: float = 1.0
    fd_step: float = 1e-6
    mode: str = "newton"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.mode not in ("newton", "fixed_point"):
            raise ValueError(f"unknown solver mode {self.mode!r}")


@dataclass
class ImplicitFlowResult:
    y: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    # size of the last update; for fixed_point mode this is the final
    # iteration correction (diagnostic for convergence studies)
    last_correction: float = np.nan


@dataclass
class ConvergenceRecord:
    """One row of a healing-time sweep: errors[j] = E^j(t_skip)."""

    t_skip: float
    errors: list = field(default_factory=list)
    converged: bool = True


def lift_evolve_restrict(sys, t, x):
    """The coarse map P(t; x) = restrict(evolve(t, lift(x)))."""
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    x = np.asarray(x, dtype=float)
    u = sys.lift(x)
    if t > 0:
        u = sys.evolve(t, u)
    return np.asarray(sys.restrict(u), dtype=float)


def _damped_newton(residual, y0, cfg):
    """Damped Newton iteration with central-FD Jacobians.

    Returns (y, residual_norm, iterations, converged).  The best iterate
    seen is returned even when the iteration cap is reached.
    """
    y = np.asarray(y0, dtype=float).copy()
    res = residual(y)
    rnorm = float(np.linalg.norm(res))
    best_y, best_rnorm = y.copy(), rnorm
    last_step = np.nan
    for it in range(1, cfg.max_iterations + 1):
        if rnorm <= cfg.tolerance:
            return y, rnorm, it - 1, True, last_step
        jac = central_jacobian(residual, y, cfg.fd_step)
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise ConditioningError(
                f"Newton Jacobian ill-conditioned (cond ~ {cond:.2e})",
                condition=cond)
        step = np.linalg.solve(jac, res)
        # backtracking: a full step can overshoot into a spurious basin (or
        # outside the lifting's domain) when the healed residual surface is
        # shallow; halve until the residual actually drops
        scale = cfg.damping
        for _ in range(8):
            cand = y - scale * step
            try:
                cand_res = residual(cand)
            except (ValueError, FloatingPointError):
                scale *= 0.5
                continue
            cand_rnorm = float(np.linalg.norm(cand_res))
            if cand_rnorm < rnorm:
                break
            scale *= 0.5
        else:
            cand = y - scale * step
            try:
                cand_res = residual(cand)
                cand_rnorm = float(np.linalg.norm(cand_res))
            except (ValueError, FloatingPointError):
                # even the tiniest step leaves the domain; stop here and
                # let the best-iterate bookkeeping report what was reached
                break
        y, res, rnorm = cand, cand_res, cand_rnorm
        last_step = float(np.linalg.norm(scale * step))
        if rnorm < best_rnorm:
            best_y, best_rnorm = y.copy(), rnorm
    converged = best_rnorm <= cfg.tolerance
    return best_y, best_rnorm, cfg.max_iterations, converged, last_step


def implicit_flow(sys, t_skip, delta, x, cfg=None, y_guess=None):
    """Solve P(t_skip; y) = P(t_skip + delta; x) for y.

    In "newton" mode a damped Newton iteration with finite-difference
    Jacobians of P(t_skip; .) is used.  In "fixed_point" mode the backend
    must supply pstar/pstar_inverse; the contraction
    y <- Pstar(t_skip)^-1 [ b + Pstar(t_skip; y) - P(t_skip; y) ]
    is iterated instead, where b = P(t_skip + delta; x).  Its fixed point
    satisfies P(t_skip; y) = b, and the transversal mismatch Pstar - P
    makes the map contract once the healing time is long enough.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    b = lift_evolve_restrict(sys, t_skip + delta, x)
    y0 = x if y_guess is None else np.asarray(y_guess, dtype=float)

    if cfg.mode == "newton":
        y, rnorm, its, conv, corr = _damped_newton(
            lambda y: lift_evolve_restrict(sys, t_skip, y) - b, y0, cfg)
        return ImplicitFlowResult(y, rnorm, its, conv, corr)

    if sys.pstar is None or sys.pstar_inverse is None:
        raise SolverError(
            f"backend {sys.label!r} does not provide the explicit slow map "
            "required for fixed_point mode")
    # convergence is judged on the coarse-space correction: after healing
    # the defining residual can sit many orders below the moments' scale
    # while y is still away from the fixed point, so the residual alone
    # would declare victory at iteration zero
    y = y0.copy()
    corr = np.inf
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        target = (b + np.asarray(sys.pstar(t_skip, y), dtype=float)
                  - lift_evolve_restrict(sys, t_skip, y))
        y_new = np.asarray(sys.pstar_inverse(t_skip, target, y), dtype=float)
        prev_corr, corr = corr, float(np.linalg.norm(y_new - y))
        y = y_new
        if corr <= cfg.tolerance or corr >= prev_corr:
            # done, or stalled at the attainable accuracy (the strong
            # contraction leaves only the inverse-map noise floor)
            break
    rnorm = float(np.linalg.norm(lift_evolve_restrict(sys, t_skip, y) - b))
    return ImplicitFlowResult(y, rnorm, it, corr <= cfg.tolerance, corr)


def _fd_derivative(flow, x, order, step):
    """Central finite differences of a vector-valued map at x.

    order 1 gives the d x d Jacobian, order 2 the d x d x d second-derivative
    tensor, symmetrized in the last two indices.
    """
    x = np.asarray(x, dtype=float)
    d = x.size

    def shifted(*pairs):
        z = x.copy()
        for j, s in pairs:
            z[j] += s * step
        return np.asarray(flow(z), dtype=float)

    if order == 1:
        cols = [(shifted((j, +1)) - shifted((j, -1))) / (2 * step)
                for j in range(d)]
        return np.column_stack(cols)
    if order == 2:
        f0 = np.asarray(flow(x), dtype=float)
        tensor = np.empty((d, d, d))
        for j in range(d):
            tensor[:, j, j] = (shifted((j, +1)) - 2 * f0
                               + shifted((j, -1))) / step**2
            for k in range(j + 1, d):
                mixed = (shifted((j, +1), (k, +1)) - shifted((j, +1), (k, -1))
                         - shifted((j, -1), (k, +1))
                         + shifted((j, -1), (k, -1))) / (4 * step**2)
                tensor[:, j, k] = mixed
                tensor[:, k, j] = mixed
        return tensor
    raise ValueError("order must be 1 or 2")


def macro_flow_derivative(sys, t_skip, delta, x, order, step, cfg=None):
    """Central-FD derivative of the implicit coarse flow x -> Phi_tskip(delta; x).

    Each stencil evaluation is an implicit solve warm-started from the
    center solution; a failed solve raises SolverError naming the point.
    """
    cfg = cfg or SolverConfig()
    center = implicit_flow(sys, t_skip, delta, x, cfg)
    if not center.converged:
        raise SolverError(f"implicit solve failed at base point {x}",
                          residual=center.residual_norm)

    def flow(z):
        r = implicit_flow(sys, t_skip, delta, z, cfg, y_guess=center.y)
        if not r.converged:
            raise SolverError(f"implicit solve failed at stencil point {z}",
                              residual=r.residual_norm)
        return r.y

    return _fd_derivative(flow, x, order, step)


def convergence_study(sys, reference, x, delta, t_skip_grid, max_order,
                      cfg=None, fd_step=1e-4):
    """Healing-time sweep of E^j(t_skip) = ||d^j Phi_tskip - d^j Phi_*||.

    reference is the oracle flow, called as reference(delta, x); its
    derivatives are taken with the same central-FD stencil as those of the
    implicit flow.  Norms are Euclidean for j = 0 and Frobenius for the
    derivative tensors.  Solves are warm-started along the grid; rows whose
    solve fails are flagged converged=False and carry no errors.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    grid = list(t_skip_grid)
    if grid != sorted(grid):
        raise ValueError("t_skip_grid must be sorted ascending")

    ref_vals = [np.asarray(reference(delta, x), dtype=float)]
    for order in range(1, max_order + 1):
        ref_vals.append(_fd_derivative(lambda z: reference(delta, z),
                                       x, order, fd_step))

    records = []
    guess = x
    for t_skip in grid:
        try:
            res = implicit_flow(sys, t_skip, delta, x, cfg, y_guess=guess)
            if not res.converged:
                records.append(ConvergenceRecord(t_skip, [], False))
                continue
            guess = res.y
            errors = [float(np.linalg.norm(res.y - ref_vals[0]))]
            for order in range(1, max_order + 1):
                deriv = macro_flow_derivative(sys, t_skip, delta, x, order,
                                              fd_step, cfg)
                errors.append(float(np.linalg.norm(deriv - ref_vals[order])))
            records.append(ConvergenceRecord(t_skip, errors, True))
        except (SolverError, ConditioningError):
            records.append(ConvergenceRecord(t_skip, [], False))
    return records


def fit_decay_rate(records, window):
    """Least-squares slope of log(value) vs t over the given window.

    records is an iterable of (t, value) pairs; points outside the window or
    with nonpositive values are dropped.  Requires at least 3 usable points.
    """
    t_lo, t_hi = window
    ts, vs = [], []
    for t, v in records:
        if t_lo <= t <= t_hi and v > 0 and np.isfinite(v):
            ts.append(t)
            vs.append(v)
    if len(ts) < 3:
        raise InsufficientDataError(
            f"only {len(ts)} usable points in window [{t_lo}, {t_hi}]")
    slope, _ = np.polyfit(ts, np.log(vs), 1)
    return float(slope)


def optimal_healing_time(eval_error, d_tan_plus, d_tr):
    """Approximate optimal healing time -log(Delta) / (d_tan+ + d_tr)."""
    if not 0.0 < eval_error < 1.0:
        raise ValueError("evaluation error must lie in (0, 1)")
    if d_tr <= 0:
        raise ValueError("transversal rate must be positive")
    if d_tan_plus < 0:
        raise ValueError("tangential expansion rate must be nonnegative")
    return -np.log(eval_error) / (d_tan_plus + d_tr)


def restriction_coordinate_flow(sys, t_skip, delta, x, cfg=None):
    """Coarse flow in restriction coordinates (healing applied backward).

    Solves x = P(t_skip; x_b) for the pre-image x_b, then returns
    P(t_skip + delta; x_b).
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    xb, rnorm, _, conv, _ = _damped_newton(
        lambda z: lift_evolve_restrict(sys, t_skip, z) - x, x, cfg)
    if not conv:
        raise SolverError("backward healing solve did not converge",
                          residual=rnorm)
    return lift_evolve_restrict(sys, t_skip + delta, xb)


def approx_fiber_coordinates(sys, t_skip, x, cfg=None):
    """Approximate stable-fiber base point of lift(x) as a microscopic state.

    Solves P(2 t_skip; x_g) = P(t_skip; x) for x_g and returns
    evolve(t_skip, lift(x_g)), which approximates the fiber projection of
    lift(x) onto the slow manifold.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    target = lift_evolve_restrict(sys, t_skip, x)
    xg, rnorm, _, conv, _ = _damped_newton(
        lambda z: lift_evolve_restrict(sys, 2 * t_skip, z) - target, x, cfg)
    if not conv:
        raise SolverError("fiber coordinate solve did not converge",
                          residual=rnorm)
    u = sys.lift(xg)
    if t_skip > 0:
        u = sys.evolve(t_skip, u)
    return u
