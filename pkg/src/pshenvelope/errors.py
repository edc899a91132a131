"""Exception hierarchy shared by every module of the toolkit."""


class PshError(Exception):
    """Base class for all toolkit errors."""


class DomainError(PshError):
    pass


class EmptyInterior(DomainError):
    """No lattice node lies strictly inside the domain."""


class UnboundedDomain(DomainError):
    """The sublevel set touches the margin of the declared bounding box."""


class EvaluationError(PshError):
    """An expression produced a non-finite value or could not be evaluated."""


class ExpressionSyntaxError(EvaluationError):
    pass


class NonLatticeOffset(PshError):
    """A translation vector is not an integer multiple of the spacing."""


class GridMismatch(PshError):
    pass


class EmptyRegion(PshError):
    pass


class MissingNeighbor(PshError):
    pass


class StencilError(PshError):
    """Invalid stencil: non-orthogonal frame or malformed direction."""


class BracketFailure(PshError):
    pass


class NonMonotoneRHS(PshError):
    pass


class MaxIterExceeded(PshError):
    """Raised by solvers when ``raise_on_fail`` is set.

    The best iterate and its report are attached so callers can inspect them.
    """

    def __init__(self, message, result=None, report=None):
        super().__init__(message)
        self.result = result
        self.report = report


class OffsetLeavesDomain(PshError):
    pass


class EmptySet(PshError):
    pass


class DegenerateFit(PshError):
    pass


class EmptyInner(PshError):
    pass


class NonNested(PshError):
    pass


class ConfigError(PshError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
