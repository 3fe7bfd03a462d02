"""Exception hierarchy shared by every gridlin module."""


class GridlinError(Exception):
    """Base class for all errors raised by gridlin."""


# network construction
class NetworkError(GridlinError):
    pass


class CycleDetected(NetworkError):
    pass


class DisconnectedBus(NetworkError):
    pass


class PhaseMismatch(NetworkError):
    pass


class DuplicateSegmentForChild(NetworkError):
    pass


class SingularImpedance(NetworkError):
    pass


class UnknownBus(NetworkError, KeyError):
    pass


# loads
class LoadError(GridlinError):
    pass


class DegenerateVoltagePair(LoadError):
    pass


class MissingPhase(LoadError):
    pass


class DimensionMismatch(GridlinError, ValueError):
    pass


# solvers
class NonConvergence(GridlinError):
    def __init__(self, message, iterations=None, residual=None, step=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.step = step


class ZeroVoltage(GridlinError):
    pass


class MissingSegmentParams(GridlinError):
    pass


class SingularSystem(GridlinError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


# metrics / io
class ZeroTruthEntry(GridlinError, ValueError):
    pass


class ParseError(GridlinError):
    def __init__(self, message, path=None, line=None, column=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
        self.column = column


class StepMismatch(GridlinError):
    pass


class EmptyInput(GridlinError):
    pass
