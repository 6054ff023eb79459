"""Exception types shared across the package."""


class StableSegError(Exception):
    """Base class for all package errors."""


class DomainError(StableSegError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class EmptyImageError(DomainError):
    """An operation received an image or pixel sequence with no pixels."""


class FormatError(StableSegError, ValueError):
    """Malformed or unsupported image file contents."""


class InternalError(StableSegError, RuntimeError):
    """Partition bookkeeping reached an inconsistent state."""
