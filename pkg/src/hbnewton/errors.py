"""Exception types raised across the package."""


class HBNewtonError(Exception):
    """Base class for all package errors."""


class InvalidDegreeError(HBNewtonError, ValueError):
    pass


class GenerationFailure(HBNewtonError, RuntimeError):
    """Random construction did not succeed within its retry budget."""


class NonConvergenceError(HBNewtonError, RuntimeError):
    pass


class DimensionMismatch(HBNewtonError, ValueError):
    pass


class FactorizationError(HBNewtonError, ArithmeticError):
    """Hessian is numerically not symmetric positive definite."""


class MaxIterationsExceeded(HBNewtonError, RuntimeError):
    pass


class DivergenceError(HBNewtonError, ArithmeticError):
    """A run blew up. The partial trace is attached as ``trace``."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptyRegionError(HBNewtonError, ValueError):
    pass


class InfeasibleError(HBNewtonError, ValueError):
    pass


class InsufficientTraceError(HBNewtonError, ValueError):
    pass


class DegenerateLabelsError(HBNewtonError, RuntimeError):
    pass


class ParseError(HBNewtonError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InconsistentWidthError(ParseError):
    pass


class RankDeficiencyError(HBNewtonError, ValueError):
    pass


class ConfigError(HBNewtonError, ValueError):
    """Invalid experiment configuration; ``field`` holds the dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
