"""Exception types raised across the package."""

import numpy as np


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(RuntimeError):
    """An iterative kernel exhausted its term or iteration budget."""


class NumericalInstabilityError(ArithmeticError):
    """Floating-point cancellation exceeded the tolerated relative error."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A least-squares system is numerically singular."""


class NoRootError(ValueError):
    """A bracketing root finder found no sign change on its bracket."""

    def __init__(self, message, lo=None, hi=None, g_lo=None, g_hi=None):
        super().__init__(message)
        self.lo, self.hi = lo, hi
        self.g_lo, self.g_hi = g_lo, g_hi


class DegenerateBudgetError(ValueError):
    """Measurement budget does not undersample the unknown vector."""
