"""Exception types shared across the package.

Plain ``ValueError`` is used for generic input problems (bad shapes, bad
domains, malformed configuration); the subclasses below exist because the
command line maps them to distinct exit codes.
"""


class DegenerateDataError(ValueError):
    """Raised when the data carries no spread (e.g. all observations equal)."""


class SingularDesignError(ValueError):
    """Raised when a regression design matrix is rank deficient."""


class FactorizationError(RuntimeError):
    """Raised when a covariance matrix cannot be Cholesky-factorized."""


class GridMismatchError(ValueError):
    """Raised when two grid functions live on different grids."""
