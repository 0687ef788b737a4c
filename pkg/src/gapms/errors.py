"""Exception hierarchy shared by all gapms modules."""


class GapMSError(Exception):
    """Base class for every error raised by gapms."""


class InvalidParameter(GapMSError, ValueError):
    pass


class CapacityExceeded(GapMSError):
    pass


class UnreachableTarget(GapMSError):
    pass


class DegenerateInput(GapMSError, ValueError):
    pass


class NoSolution(GapMSError):
    """No reach pose satisfies the constraints."""


class NoPath(GapMSError):
    """A reach pose exists but no smooth collision-free motion to it was found."""


class InfeasibleTiming(GapMSError):
    """The dynamic obstacle is too close ahead of the arm to replan in time."""


class ExecutionCollision(GapMSError):
    pass


class ExecutionTimeout(GapMSError):
    pass


class ParseError(GapMSError, ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class EmptyCone(GapMSError):
    """No quiver vector falls inside a non-zero approach cone."""
