"""Exception hierarchy shared by all storage components."""

from __future__ import annotations


class FlatStateError(Exception):
    """Base class for every error raised by this package."""


class StorageError(FlatStateError):
    """An underlying file operation failed."""

    def __init__(self, message: str, path=None, offset=None):
        if path is not None:
            message = f"{message} (file={path}, offset={offset})"
        super().__init__(message)
        self.path = path
        self.offset = offset


class BoundsError(FlatStateError, IndexError):
    """A record, page, or block index is out of range."""


class FormatError(FlatStateError, ValueError):
    """Data has the wrong length, width, or encoding."""


class ValidationError(FlatStateError, ValueError):
    """A block diff violates its structural invariants."""


class SequenceError(FlatStateError):
    """A block was applied or appended out of order."""


class CorruptionError(FlatStateError):
    """Stored data fails an integrity check."""


class UnavailableError(FlatStateError):
    """A historical query addresses a block not yet published."""
