"""Exception types raised by the solver library."""


class SolverError(Exception):
    """Base class for all library errors."""


# geometry
class GapUnresolved(SolverError):
    pass


class ObstaclesOverlap(SolverError):
    pass


class TruncationTooTight(SolverError):
    pass


class NotNearBoundary(SolverError):
    pass


# boundary data
class NotLipschitzEnough(SolverError):
    pass


class CutoffTooTight(SolverError):
    pass


# functional
class InfeasibleField(SolverError):
    pass


class DegenerateCell(SolverError):
    pass


class QuadratureFailure(SolverError):
    pass


# optimizer
class NoFeasibleStart(SolverError):
    pass


class StalledInfeasible(SolverError):
    pass


# oracle
class Unattainable(SolverError):
    pass


class GeometryMismatch(SolverError):
    pass


class ConfigInvalid(SolverError):
    """Raised for malformed run configurations.

    ``where`` carries a line number or a dotted field path when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


class ExpressionError(ConfigInvalid):
    pass
