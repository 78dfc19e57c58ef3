"""Exception types raised across the package."""


class GeoPowerError(Exception):
    """Base class for all package errors."""


class InvalidDesign(GeoPowerError, ValueError):
    pass


class NegativeEntry(InvalidDesign):
    pass


class RankDeficient(InvalidDesign):
    pass


class DimensionMismatch(GeoPowerError, ValueError):
    pass


class NonPositiveCell(GeoPowerError, ValueError):
    pass


class NonPositiveInput(GeoPowerError, ValueError):
    pass


class NonPositiveFitted(GeoPowerError, ValueError):
    pass


class ZeroSufficientStatistic(GeoPowerError, ValueError):
    """Some column total A_j'q is zero; the fit (or MLE) does not exist."""


class SolverError(GeoPowerError, RuntimeError):
    """Base class for iterative solver failures.

    ``result`` holds the best iterate reached, when one is available.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class MaxItersExceeded(SolverError):
    pass


class BracketFailure(SolverError):
    pass


class DegenerateDraw(GeoPowerError, RuntimeError):
    pass
