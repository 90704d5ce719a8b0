from __future__ import annotations


class BirkhoffError(Exception):
    """Base class for every domain error raised by this package."""


class NegativeCellError(BirkhoffError):
    """A sufficient statistic cell came out negative."""


class NotApplicableError(BirkhoffError):
    """A swap produced an invalid vote or a negative cell."""


class PreconditionError(BirkhoffError, ValueError):
    pass


class NonterminationError(BirkhoffError):
    """A swap process exceeded its step bound. Signals a bug, never bad input."""


class FiberMismatchError(BirkhoffError, ValueError):
    pass


class CompatibilityError(BirkhoffError):
    """No common resolvable pair exists for two consecutive improper datasets."""


class TooLargeError(BirkhoffError):
    """An enumeration would exceed the configured limits."""


class UnsupportedError(BirkhoffError):
    pass


class NonconvergenceError(BirkhoffError):
    pass


class FormatError(BirkhoffError, ValueError):
    """Malformed dataset, statistic or move text."""
