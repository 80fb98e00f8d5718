"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 1, data
validation problems exit 2, numeric failures exit 3.
"""


class DepCombError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DepCombError, ValueError):
    """Inconsistent or invalid parameters (dimension mismatch, bad spec, ...)."""


class DomainError(DepCombError, ValueError):
    """Argument outside the domain of a numerical function."""


class InfiniteQuantileError(DomainError):
    """Quantile requested at probability 0 or 1."""


class DataValidationError(DepCombError, ValueError):
    """Input data failed validation (shape, sign, all-zero rows, ...)."""


class NumericError(DepCombError, ArithmeticError):
    """A numerical routine failed (non-convergence, singular system, ...)."""


class DegenerateDistributionError(NumericError):
    """A distribution with no mass away from a point was requested."""


class SingularDesignError(NumericError):
    """Covariate matrix does not have full column rank."""


class ConvergenceError(NumericError):
    """Iterative fit did not converge within the iteration budget."""


class SeparationError(NumericError):
    """Logistic likelihood has no finite maximiser (complete separation)."""
