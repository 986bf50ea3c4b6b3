class HeleShawError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(HeleShawError, ValueError):
    """An argument lies outside the region where the operation is defined."""


class UnsupportedError(HeleShawError):
    """The operation does not apply to this kind of input."""


class NoBreakpointError(HeleShawError, ValueError):
    pass


class IterationLimitError(HeleShawError):
    """The solver stopped before meeting its tolerance."""

    def __init__(self, message, residual=None, partial=None):
        super().__init__(message)
        self.residual = residual
        self.partial = partial


class FrameContactError(HeleShawError):
    """The computed domain reached the outer frame of a plane grid."""


class TopologyError(HeleShawError):
    """A domain is not simply connected where a Riemann map was requested."""

    def __init__(self, message, holes=None):
        super().__init__(message)
        self.holes = holes


class MapError(HeleShawError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class BreakdownError(HeleShawError):
    """A marker front intersected itself during strong-flow stepping."""

    def __init__(self, message, front=None, fronts=None, t=None):
        super().__init__(message)
        self.front = front
        self.fronts = fronts
        self.t = t


class FanError(HeleShawError):
    pass
