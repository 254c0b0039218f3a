"""Exception hierarchy shared across the package."""


class NulgiError(Exception):
    """Base class for all package errors."""


class DomainError(NulgiError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DataError(NulgiError, ValueError):
    """A dataset is malformed or fails validation."""

    def __init__(self, message, *, line=None, field=None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(f"field {field!r}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ComparisonError(NulgiError):
    """Two trial distributions cannot be compared (undefined confidence)."""


class OutputError(NulgiError, OSError):
    """Writing an output file failed; the message names the path."""
