class AlignmentError(Exception):
    """Base class for every error raised by the alignment library."""


class ValidationFailure(AlignmentError, ValueError):
    """Inputs were rejected: bad parameters, mismatched grids or bases, malformed files."""


class NumericalCheckError(AlignmentError, RuntimeError):
    """A numerical self-check failed (non-PSD kernel, inexact full-rank reduction)."""
