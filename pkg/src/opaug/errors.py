"""Exception types raised across the package."""


class OpaugError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(OpaugError, ValueError):
    """Operand dimensions are incompatible."""


class NotPositiveDefinite(OpaugError, ValueError):
    """A factorization encountered a non-positive pivot."""


class NonFinite(OpaugError, FloatingPointError):
    """A computation produced inf or NaN."""


class StructureMismatch(OpaugError, ValueError):
    """Parameter vector length does not match the edge count of the structure."""


class TooLarge(OpaugError, ValueError):
    """Exact enumeration would exceed the supported outcome or size cap."""


class UnsupportedModel(OpaugError, ValueError):
    """The requested operation is undefined for this noise model."""


class DegenerateDenominator(OpaugError, ZeroDivisionError):
    """An estimator denominator vanished (all bootstrap quadratic forms zero)."""


class InvalidOrder(OpaugError, ValueError):
    """Truncation order out of range."""


class InvalidShift(OpaugError, ValueError):
    """Base-point shift alpha < 1, or non-positive gamma where one is required."""


class InvalidSize(OpaugError, ValueError):
    """Problem size parameter out of range."""


class ParseError(OpaugError, ValueError):
    """Malformed edge-list line; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class SelfLoop(ParseError):
    """Edge list contains a self-loop."""


class EmptyGraph(OpaugError, ValueError):
    """Edge list contains no edges."""


class CannotStabilize(OpaugError, RuntimeError):
    """No SPD Dirichlet minor found within the retry budget."""


class InsufficientTrials(OpaugError, ValueError):
    """Aggregation requires at least two trials."""


class PreconditionViolated(OpaugError, ValueError):
    """A lemma check was invoked outside its hypothesis."""


class ConfigError(OpaugError, ValueError):
    """Invalid benchmark configuration."""
