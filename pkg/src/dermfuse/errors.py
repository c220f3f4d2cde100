"""Exception types shared across the package.

Every failure the library raises deliberately is a subclass of
:class:`DermfuseError`, so callers (and the CLI) can catch one type and map it
to a diagnostic plus a non-zero exit code.
"""


class DermfuseError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DermfuseError):
    """A value or data structure violates a documented invariant."""


class ParseError(DermfuseError):
    """A file could not be parsed; the message names the path and line."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {message}")


class MismatchError(ValidationError):
    """Inputs that must describe the same id set do not."""


class ConfigError(DermfuseError):
    """A configuration value or flag combination is unusable."""


class StorageError(DermfuseError):
    """A file could not be written; the message names the path."""


class TransportError(DermfuseError):
    """An external prediction provider failed or returned a malformed response."""
