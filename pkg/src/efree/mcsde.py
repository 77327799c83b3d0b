"""Monte Carlo ensemble backend for the double-well SDE.

Stochastic lifting draws N particles from a Gaussian with prescribed mean
and variance, evolution is Euler-Maruyama with fixed step size, and
restriction returns raw power sums (N, sum Q, sum Q^2).  The implicit
coarse flow is solved by a damped Newton iteration on the scaled moments,
which tolerates the sampling noise of the macro map.

All randomness is counter-based: the normal variate for particle n at
step s of event e is a pure function of (seed, e, s, n), so ensembles are
bit-identical for any parallel partitioning of the particles.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .efcore import ImplicitFlowResult
from .errors import SolverError, StabilityError
from .fpspectral import DoubleWellParams

__all__ = [
    "Ensemble", "McConfig", "RngStream", "ensemble_lift",
    "euler_maruyama_evolve", "ensemble_restrict", "noisy_macro_map",
    "mc_implicit_flow", "mc_error_study",
]

# one counter block of this many 64-bit draws per time step; bounds the
# ensemble size at 2^40 particles
_STEP_STRIDE = 2 ** 40
# event keys form a base-2^20 tree: child k of event e is e * 2^20 + k
_EVENT_RADIX = 2 ** 20


class RngStream:
    """Counter-based stream of standard normals keyed by (seed, event).

    normals(step, start, count) returns variates for the contiguous
    particle range [start, start + count) at the given step index; the
    values do not depend on how the range is split across calls.  spawn()
    derives an independent child stream (at most 2^20 - 1 children per
    stream, nesting depth limited by the 64-bit event key).
    """

    def __init__(self, seed, event=0):
        self.seed = int(seed) & (2 ** 64 - 1)
        self.event = int(event) & (2 ** 64 - 1)
        self._children = 0

    def spawn(self):
        self._children += 1
        if self._children >= _EVENT_RADIX:
            raise ValueError("RngStream spawn limit exceeded")
        return RngStream(self.seed, self.event * _EVENT_RADIX + self._children)

    def normals(self, step, start, count):
        start, count = int(start), int(count)
        # Philox.advance moves in counter blocks of 4 uint64 outputs, so
        # align to the enclosing block and discard the leading draws
        skip = start % 4
        key = np.array([self.seed, self.event], dtype=np.uint64)
        bg = np.random.Philox(key=key)
        bg.advance((int(step) * _STEP_STRIDE + start - skip) // 4)
        u = np.random.Generator(bg).random(count + skip)[skip:]
        # random() can return exactly 0, where the inverse CDF diverges
        return ndtri(np.maximum(u, 2.0 ** -54))


@dataclass
class Ensemble:
    """Positions of N particles on the line."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 1 or self.positions.size < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("ensemble positions must be finite")

    @property
    def count(self):
        return self.positions.size


@dataclass
class McConfig:
    n: int = 100000
    h: float = 1e-2
    seed: int = 0
    damping: float = 0.5
    newton_tol: float = 5e-2
    fd_step: float = 5e-2
    guard: float = 50.0
    max_iterations: int = 50
    frozen_noise: bool = False
    # Newton safeguards: per-iteration step cap and a search box for
    # (mean, variance).  With h = 10^-2 the explicit scheme turns
    # oscillatory-unstable once particles pass |Q| ~ sqrt(2/(3h)) ~ 14,
    # so the box keeps lifted Gaussian tails clear of that boundary.
    max_step: float = 2.0
    mean_bound: float = 8.0
    var_bound: float = 8.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("ensemble size must be at least 1")
        for name in ("h", "damping", "newton_tol", "fd_step", "guard"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def ensemble_lift(n, mean, variance, rng_stream):
    """Draw n i.i.d. samples Q = mean + sqrt(variance) * eta, eta ~ N(0,1)."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    eta = rng_stream.normals(0, 0, n)
    return Ensemble(float(mean) + np.sqrt(float(variance)) * eta)


def _drift(p, q):
    return -(q * q * q - p.mu * q + p.nu)


def euler_maruyama_evolve(p, e, t, cfg, rng_stream):
    """Euler-Maruyama evolution Q <- Q + f(Q) h + sigma sqrt(h) xi.

    The interval is covered with full steps of cfg.h plus a final
    shortened step.  Any particle leaving |Q| <= cfg.guard raises
    StabilityError (no clamping: clamping would bias the moments).
    """
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    q = e.positions.copy()
    n = q.size
    if t == 0:
        return Ensemble(q)
    h = cfg.h
    n_full = int(t / h)
    if (n_full + 1) * h <= t * (1 + 1e-12):
        n_full += 1
    rest = t - n_full * h
    sig = p.sigma
    for s in range(n_full + 1):
        hs = h if s < n_full else rest
        if hs <= 1e-14 * max(1.0, t):
            continue
        xi = rng_stream.normals(s, 0, n)
        q += _drift(p, q) * hs + sig * np.sqrt(hs) * xi
        amax = np.abs(q).max()
        if not np.isfinite(amax) or amax > cfg.guard:
            raise StabilityError(
                f"particle left the guard region |Q| <= {cfg.guard:g} "
                f"at step {s + 1}", time=min((s + 1) * h, t))
    return Ensemble(q)


def ensemble_restrict(e):
    """Raw power sums (N, sum Q, sum Q^2)."""
    q = e.positions
    return np.array([float(q.size), q.sum(), (q * q).sum()])


def noisy_macro_map(p, t, x, cfg, rng_stream):
    """One stochastic evaluation of R(M(t; L(mean, variance))).

    x = (N, mean, variance); lifting noise and path noise come from two
    child streams spawned from rng_stream.
    """
    n = int(round(x[0]))
    lift_stream = rng_stream.spawn()
    path_stream = rng_stream.spawn()
    e = ensemble_lift(n, x[1], x[2], lift_stream)
    e = euler_maruyama_evolve(p, e, t, cfg, path_stream)
    return ensemble_restrict(e)


def _scaled_map(p, t, n, z, cfg, stream):
    """Scaled moments (mean, mean of Q^2) of the noisy macro map at
    (mean, variance) = z, with the variance clipped at zero for FD
    stencil points that step below it."""
    x = np.array([n, z[0], max(z[1], 0.0)])
    return noisy_macro_map(p, t, x, cfg, stream)[1:] / n


def mc_implicit_flow(p, t_skip, delta, x, cfg):
    """Solve P(t_skip; y) = P(t_skip + delta; x) under sampling noise.

    Damped Newton in (mean, variance) with N held fixed; residuals and
    the convergence test use the moments scaled by N.  Every macro-map
    evaluation draws fresh noise unless cfg.frozen_noise is set, in which
    case all evaluations share one realization (common random numbers).
    Returns the best iterate seen, flagged by the converged field.
    """
    n = int(round(x[0]))
    evals = 0

    def stream():
        nonlocal evals
        evals += 1
        event = 1 if cfg.frozen_noise else evals
        return RngStream(cfg.seed, event)

    b = noisy_macro_map(p, t_skip + delta, np.asarray(x, dtype=float),
                        cfg, stream())[1:] / n

    def residual(z):
        return _scaled_map(p, t_skip, n, z, cfg, stream()) - b

    z = np.array([float(x[1]), float(x[2])])
    best_z, best_r = z.copy(), np.inf
    corr = np.inf
    it = 0
    for it in range(cfg.max_iterations + 1):
        f = residual(z)
        rnorm = float(np.linalg.norm(f))
        if rnorm < best_r:
            best_z, best_r = z.copy(), rnorm
        # always take at least one step: after healing the residual at the
        # starting guess can sit below the tolerance while the guess is
        # still far from the root along the well-conditioned directions
        if (it > 0 and rnorm <= cfg.newton_tol) or it == cfg.max_iterations:
            break
        cols = []
        for j in range(2):
            e = np.zeros(2)
            e[j] = cfg.fd_step
            cols.append((residual(z + e) - residual(z - e))
                        / (2.0 * cfg.fd_step))
        jac = np.column_stack(cols)
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in Monte Carlo Newton",
                              residual=rnorm) from exc
        step = np.clip(step, -cfg.max_step, cfg.max_step)
        z = z - cfg.damping * step
        z[0] = np.clip(z[0], -cfg.mean_bound, cfg.mean_bound)
        z[1] = np.clip(z[1], 0.0, cfg.var_bound)
        corr = cfg.damping * float(np.linalg.norm(step))
    y = np.array([float(n), best_z[0], best_z[1]])
    return ImplicitFlowResult(y, best_r, it, best_r <= cfg.newton_tol, corr)


def mc_error_study(p, x_list, delta, t_skip_grid, cfg, t_max_reference,
                   labels=None):
    """Healing-time sweep of the implicit-flow error under sampling noise.

    For each start x = (N, mean, variance), the flow at every t_skip on
    the grid is compared (in the mean/variance coordinates) to the flow at
    t_max_reference, which must be the grid maximum.  Rows are dicts with
    keys t_skip, err, converged, start_label; the reference row reuses the
    reference solve, so its error is exactly zero.  With fresh noise each
    row gets its own derived seed; in frozen-noise mode all rows share
    cfg.seed, so the whole sweep probes the implicit flows of one and the
    same deterministic noisy map and the common sampling bias largely
    cancels in the row-minus-reference differences.  Rows whose solve
    fails outright (stability or singular Jacobian) are recorded with
    err = nan and converged False.
    """
    grid = [float(t) for t in t_skip_grid]
    if abs(t_max_reference - max(grid)) > 1e-12:
        raise ValueError("t_max_reference must be the grid maximum")
    if labels is None:
        labels = [f"start{i}" for i in range(len(x_list))]
    records = []
    for i, (x, label) in enumerate(zip(x_list, labels)):
        rows = {}
        for j, t_skip in enumerate(sorted(set(grid))):
            row_seed = cfg.seed if cfg.frozen_noise \
                else cfg.seed + 7919 * i + 31 * j
            cfg_row = McConfig(
                n=cfg.n, h=cfg.h, seed=row_seed,
                damping=cfg.damping, newton_tol=cfg.newton_tol,
                fd_step=cfg.fd_step, guard=cfg.guard,
                max_iterations=cfg.max_iterations,
                frozen_noise=cfg.frozen_noise,
                max_step=cfg.max_step, mean_bound=cfg.mean_bound,
                var_bound=cfg.var_bound)
            try:
                rows[t_skip] = mc_implicit_flow(p, t_skip, delta, x, cfg_row)
            except (StabilityError, SolverError):
                rows[t_skip] = None
        ref_res = rows[max(grid)]
        ref = None if ref_res is None else ref_res.y[1:]
        for t_skip in grid:
            res = rows[t_skip]
            if res is None or ref is None:
                err, conv = float("nan"), False
            else:
                err, conv = float(np.linalg.norm(res.y[1:] - ref)), bool(
                    res.converged)
            records.append({
                "t_skip": t_skip,
                "err": err,
                "converged": conv,
                "start_label": label,
            })
    return records
