"""Exception hierarchy shared by all modules."""


class MlfError(Exception):
    """Base class for package errors."""


class DomainError(MlfError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EvaluationError(MlfError, ArithmeticError):
    """A numerical evaluation did not reach its accuracy target.

    Attributes
    ----------
    regime : str
        Evaluation regime that was active when giving up.
    partial : float
        Best available estimate, for diagnostics only.
    """

    def __init__(self, message, regime="unknown", partial=float("nan")):
        super().__init__(message)
        self.regime = regime
        self.partial = partial


class EstimationError(MlfError):
    """An estimator could not produce a valid estimate."""


class WeightingError(MlfError, ValueError):
    """Observation weights are invalid (negative, non-finite, degenerate)."""


class EmptyWindowError(MlfError):
    """No observation falls inside the kernel window of a calendar day."""


class ThresholdError(MlfError, ValueError):
    """Peak-over-threshold extraction is impossible for the given input."""


class UndefinedEfficiencyError(MlfError, ZeroDivisionError):
    """Relative efficiency is undefined because an MSE is zero."""


class PermutationTestError(MlfError):
    """Too many daily fits failed for the permutation statistic to be usable."""
