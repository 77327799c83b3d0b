"""Exception types shared across the toolkit."""


class EquationFreeError(Exception):
    """Base class for all toolkit-specific failures."""


class EvolutionError(EquationFreeError):
    """Microscopic evolution produced a non-finite state.

    Carries the time at which the failure was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StabilityError(EvolutionError):
    """A stochastic trajectory left the configured stability guard region."""


class ConditioningError(EquationFreeError):
    """A Jacobian or transfer matrix is too ill-conditioned to invert."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class TransversalityError(ConditioningError):
    """Lifting/restriction transversality check failed (near-singular map)."""


class SolverError(EquationFreeError):
    """A nonlinear solve failed and no usable iterate is available."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(EquationFreeError):
    """Not enough usable points for a requested fit."""
