"""Exception types shared across the package."""


class FvrError(Exception):
    """Base class for package errors."""


class FormatError(FvrError, ValueError):
    """A file could not be parsed or failed validation."""


class GeometryError(FvrError, ValueError):
    """A geometric precondition was violated (e.g. a point behind a camera)."""


class EmptyHullError(FvrError, RuntimeError):
    """The visual hull is empty; reconstruction is impossible."""


class NoFlameError(FvrError, ValueError):
    """No flame pixels were found where at least one was required."""
