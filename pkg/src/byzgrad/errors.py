"""Exception hierarchy shared by every module."""


class ByzGradError(Exception):
    """Base class for all errors raised by byzgrad."""


class InvalidParams(ByzGradError, ValueError):
    pass


class NotRooted(ByzGradError):
    pass


class NotResilient(ByzGradError):
    pass


class SizeMismatch(ByzGradError, ValueError):
    pass


class NotSubstochastic(ByzGradError, ValueError):
    pass


class TooFewNeighbors(ByzGradError, ValueError):
    pass


class InvalidEta(ByzGradError, ValueError):
    pass


class DimMismatch(ByzGradError, ValueError):
    pass


class Infeasible(ByzGradError):
    """A hull-intersection system has no solution within tolerance.

    ``max_residual`` carries the best residual the solver reached.
    """

    def __init__(self, message: str, max_residual: float = float("nan")):
        super().__init__(message)
        self.max_residual = max_residual


class EmptyIntersection(Infeasible):
    pass


class UnsupportedFamily(ByzGradError):
    pass


class EmptyZeroSet(ByzGradError):
    pass


class HorizonExceeded(ByzGradError, ValueError):
    pass


class ConfigInvalid(ByzGradError):
    pass


class HypothesisFailed(ByzGradError):
    pass


class PickInfeasible(Infeasible):
    """Raised by the round engine when an agent cannot pick an intersection point."""

    def __init__(self, message: str, agent: int, round_: int, max_residual: float = float("nan")):
        super().__init__(message, max_residual)
        self.agent = agent
        self.round = round_


class IncompleteDecomposition(ByzGradError):
    pass


class NotConverged(ByzGradError):
    def __init__(self, message: str, disagreement: float):
        super().__init__(message)
        self.disagreement = disagreement


class DegenerateData(ByzGradError):
    pass
