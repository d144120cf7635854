"""Exception taxonomy shared across the solver."""

from __future__ import annotations


class CrossFVError(Exception):
    """Base class for all solver errors."""


class ConfigurationError(CrossFVError):
    """Invalid mesh/kernel/scheme/experiment configuration."""


class UsageError(CrossFVError):
    """An operation was called with arguments outside its contract."""


class NumericalStateError(CrossFVError):
    """Non-finite or otherwise unusable numerical state was encountered."""


class SolverFailure(CrossFVError):
    """A linear solve exhausted its iteration budget.

    Carries the residual history so the caller can diagnose stagnation.
    """

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class StepFailure(CrossFVError):
    """A time step did not converge (Picard budget exhausted or solve failed)."""

    def __init__(self, message: str, step_index: int | None = None, error_history=None):
        super().__init__(message)
        self.step_index = step_index
        self.error_history = list(error_history or [])
