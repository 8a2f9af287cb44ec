"""Exception types shared across the package."""


class CggmError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CggmError, ValueError):
    """Invalid or non-conforming input: shapes, finiteness, ranges."""


class NotPositiveDefiniteError(CggmError):
    """A matrix required to be positive definite is not."""


class RankError(CggmError):
    """A matrix required to be invertible is singular or near-singular."""


class ConvergenceError(CggmError):
    """An iterative solver exhausted its iteration budget.

    The last iterate is attached as ``last`` so callers can inspect or
    resume from it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NumericalError(CggmError):
    """Numerical breakdown: loss of positive definiteness during sweeps, or
    an objective increase beyond the allowed slack."""


class ParseError(CggmError, ValueError):
    """Malformed input file; the message names the offending line."""


class SearchError(CggmError):
    """A tuning-parameter grid search produced no usable cell."""
