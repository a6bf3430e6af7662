"""Exception types shared across the package.

Split along the CLI's exit-code boundary: data problems (bad files,
invariant violations) versus numerical failures (factorizations,
non-convergence).
"""


class CausalfdaError(Exception):
    """Base class for all package errors."""


class DataError(CausalfdaError, ValueError):
    """Invalid input data: malformed files, broken invariants, mismatched grids."""


class GridMismatchError(DataError):
    """Two functional objects do not share the same time grid."""


class NumericsError(CausalfdaError, RuntimeError):
    """A numerical routine failed: indefinite matrix, singular design, divergence."""


class IndefiniteMatrixError(NumericsError):
    """Covariance matrix could not be factorized even at maximum jitter."""


class SingularDesignError(NumericsError):
    """Design matrix is rank deficient or numerically singular."""


class SeparationError(NumericsError):
    """Logistic fit diverged; data are (quasi-)separated."""


class ConvergenceError(NumericsError):
    """Iterative fit did not converge within the iteration budget."""
