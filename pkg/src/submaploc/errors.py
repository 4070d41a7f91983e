"""Domain error types raised by the public API.

Everything that maps to a CLI exit code 1 derives from DomainError, so the
entry point can catch one base class and print a single machine-parsable line.
"""


class DomainError(Exception):
    """Base class for recoverable domain failures."""


class DimensionMismatch(DomainError, ValueError):
    """Array arguments disagree on shape or length."""


class EmptyInput(DomainError, ValueError):
    """An operation that needs at least one element received none."""


class EmptyIndex(DomainError, ValueError):
    """A retrieval index holds no entries."""


class IndexOutOfRange(DomainError, IndexError):
    """A correspondence map references a row that does not exist."""


class InsufficientCorrespondences(DomainError, ValueError):
    """Fewer surviving correspondences than the fit requires."""


class DegenerateGeometry(DomainError, ValueError):
    """Correspondence geometry does not constrain a unique rotation."""


class NonPositiveSaliency(DomainError, ValueError):
    """Keypoint saliency values must be strictly positive."""


class FormatError(DomainError, ValueError):
    """A binary or text artifact does not parse under its declared format."""


class ConfigError(DomainError, ValueError):
    """A configuration document is malformed or carries unknown keys."""
