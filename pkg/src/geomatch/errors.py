"""Exception hierarchy for geomatch."""


class GeomatchError(Exception):
    """Base class for all package errors."""


class ShapeError(GeomatchError):
    pass


class InvalidShape(ShapeError):
    pass


class DomainError(GeomatchError):
    """Raised when an objective is evaluated outside its domain of definition.

    The line search treats these as infinitely bad trial points.
    """


class DegenerateSimplex(DomainError, ShapeError):
    pass


class NotImmersed(DomainError):
    pass


class NotARotation(GeomatchError):
    pass


class ParseError(GeomatchError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(GeomatchError):
    pass


class DimensionMismatch(GeomatchError):
    pass


class KindMismatch(GeomatchError):
    pass


class NonFiniteState(GeomatchError):
    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite state or costate at step {step}")


class NonFiniteObjective(GeomatchError):
    pass


class OrderTooHigh(GeomatchError):
    pass


class FitError(GeomatchError):
    pass


class ConfigError(GeomatchError):
    pass
