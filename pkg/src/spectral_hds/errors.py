"""Exception hierarchy shared by all modules."""


class HDSError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(HDSError, ValueError):
    """Invalid parameter value or inconsistent configuration values."""


class DegenerateError(HDSError, ValueError):
    """Input or output too small or too flat to be processed."""


class ShapeError(HDSError, ValueError):
    """Array or bit-string lengths do not match."""


class ParseError(HDSError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigurationError(HDSError):
    """A stored record does not match the grid/code it is used with."""


class UnsupportedKindError(HDSError, ValueError):
    """Operation not defined for this spectral-function kind."""


class ChannelUselessError(HDSError, ValueError):
    """Attenuation is zero, so reconstruction carries no information."""
