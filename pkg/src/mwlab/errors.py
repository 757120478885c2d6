"""Exception types shared across the package."""


class MwlabError(Exception):
    """Base class for all errors raised by mwlab."""


class InvalidInputError(MwlabError, ValueError):
    """Non-finite, wrongly shaped or otherwise malformed input."""


class DomainError(MwlabError, ValueError):
    """A parameter lies outside the range where the operation is defined."""


class IllConditionedError(MwlabError, ValueError):
    """Spectrum too close to singular for the requested operation."""


class DegenerateBodyError(MwlabError):
    """A convex body average spans a proper subspace.

    ``rank`` is the dimension of the span and ``basis`` an orthonormal
    basis of it (columns), so callers can continue on the span.
    """

    def __init__(self, rank, basis):
        super().__init__(f"degenerate convex body of rank {rank}")
        self.rank = rank
        self.basis = basis


class NumericError(MwlabError, RuntimeError):
    """An iterative solver failed to converge; ``trace`` holds its history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ResolutionExhausted(MwlabError):
    """Recursion reached below single grid cells."""


class ConfigError(MwlabError, ValueError):
    """Invalid experiment configuration."""
