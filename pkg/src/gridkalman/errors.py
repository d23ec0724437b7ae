"""Exception types shared across the package.

The split mirrors the command line exit contract: bad inputs are
``ValidationError`` (exit code 2), violations of the numerical working
assumptions -- lost positive definiteness, singular innovation
covariance, divergent iterations -- are ``ConditioningError`` or
``ConvergenceError`` (exit code 3).
"""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class ConditioningError(RuntimeError):
    """Raised when a numerical working assumption fails at run time.

    Examples: innovation covariance not positive, covariance factorization
    failure, rank-deficient measurement matrix where full rank is assumed.
    """


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget."""
