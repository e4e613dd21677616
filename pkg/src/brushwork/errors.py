"""Exception taxonomy shared across the package."""


class BrushworkError(Exception):
    """Base class for all package-specific errors."""


class DecodeError(BrushworkError, ValueError):
    """Raised when an encoded audio or image payload cannot be parsed."""


class UnsupportedFormatError(BrushworkError, ValueError):
    """Raised when a payload parses but uses an encoding outside scope."""


class PreconditionError(BrushworkError, ValueError):
    """Raised when an operation's input contract is violated."""


class ShapeError(BrushworkError, ValueError):
    """Raised on tensor or embedding dimension mismatches."""


class StateError(BrushworkError, RuntimeError):
    """Raised when an operation is invoked in an invalid lifecycle state."""


class TrainingError(BrushworkError, RuntimeError):
    """Raised when training diverges (non-finite loss)."""


class FormatError(BrushworkError, ValueError):
    """Raised when a persisted file has the wrong magic."""


class VersionError(BrushworkError, ValueError):
    """Raised when a persisted file has an unsupported format version."""


class CorruptionError(BrushworkError, ValueError):
    """Raised when a persisted file is truncated or inconsistent."""


class EmptyIndexError(BrushworkError, ValueError):
    """Raised when a query runs against an empty index or empty filter."""


class ConfigError(BrushworkError, ValueError):
    """Raised when a session or training configuration is invalid."""


class StartupError(BrushworkError, RuntimeError):
    """Raised when a session cannot load one of its referenced files."""
