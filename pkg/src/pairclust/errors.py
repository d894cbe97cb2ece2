"""Exception types raised across the package."""


class PairclustError(Exception):
    """Base class for all package errors."""


class InvalidRateError(PairclustError, ValueError):
    """Edge inclusion probability alpha/n is outside [0, 1]."""


class OutOfSupportError(PairclustError, ValueError):
    """A measurement lies where every pairwise density vanishes."""


class NumericalUnderflowError(PairclustError, ArithmeticError):
    """A message or marginal normalizer collapsed to zero."""


class NoInformativeEigenvalueError(PairclustError):
    """A spectral method found no eigenvalue beyond its threshold (r = 0)."""


class WeightSaturationError(PairclustError, ValueError):
    """An edge weight is too close to the Bethe Hessian parameter x."""

    def __init__(self, message: str, edge: int | None = None):
        super().__init__(message)
        self.edge = edge


class SolverFailureError(PairclustError, RuntimeError):
    """An iterative eigensolver broke down or failed to converge."""


class InsufficientTrainingDataError(PairclustError, ValueError):
    """A class pair has no training measurements to estimate a density from."""


class EnumerationBoundError(PairclustError, ValueError):
    """Permutation search requested for more labels than the brute-force bound."""


class ConfigurationError(PairclustError, ValueError):
    """Bad experiment configuration or malformed input file."""
