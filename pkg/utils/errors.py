"""Exception types raised across the package.

Most derive from ValueError so callers that only know "bad input" keep working.
"""


class ShapeError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An operation was applied outside its mathematical domain."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf from finite inputs."""


class TapeError(RuntimeError):
    """Misuse of a differentiation tape."""


class GeometryError(ValueError):
    """Invalid molecular geometry."""


class SpeciesError(ValueError):
    """Atomic species not covered by a table."""


class ParseError(ValueError):
    """Malformed extended-XYZ input."""

    def __init__(self, message, line=None, frame=None):
        self.line = line
        self.frame = frame
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(ValueError):
    """Configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FrameError(ValueError):
    """Frame is singular or an oracle was asked for too much work."""


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite loss.

    Attributes:
        params: last parameters that produced a finite validation score
        history: epochs completed before the abort
    """

    def __init__(self, message, params=None, history=None):
        self.params = params
        self.history = history
        super().__init__(message)
