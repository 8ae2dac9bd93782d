"""Exception and warning types shared across the package."""


class BlindcalError(Exception):
    """Base class for every error raised by this library."""


class DimensionError(BlindcalError, ValueError):
    """Array shapes disagree with the problem dimensions (n, m, p)."""


class ParameterError(BlindcalError, ValueError):
    """A numeric parameter violates its admissible range."""


class FormatError(BlindcalError, ValueError):
    """A file does not conform to the expected on-disk format."""


class DivergenceError(BlindcalError, RuntimeError):
    """The descent produced a non-finite objective value."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class SingularityError(BlindcalError, RuntimeError):
    """A linear system is rank deficient or effectively so."""


class TheoryRangeWarning(UserWarning):
    """Parameters fall outside the range covered by the convergence theory."""
