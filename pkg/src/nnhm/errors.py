"""Exception hierarchy shared by all modules."""


class NNHMError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(NNHMError, ValueError):
    """An argument lies outside the domain of the operation."""


class ProprietyError(NNHMError):
    """A prior/data combination does not yield a proper posterior."""


class CapabilityError(NNHMError):
    """The requested operation is not available for this object.

    Raised e.g. when asking an improper prior for its CDF or a sampler.
    """


class ConvergenceError(NNHMError):
    """A numerical routine did not reach its tolerance.

    The best available estimate is kept in ``estimate`` (and, for
    quadrature, the error estimate in ``abs_error``).
    """

    def __init__(self, message, estimate=None, abs_error=None):
        super().__init__(message)
        self.estimate = estimate
        self.abs_error = abs_error


class AccuracyError(NNHMError):
    """The requested approximation accuracy cannot be reached."""


class ParseError(NNHMError, ValueError):
    """Malformed input data or configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReplicationError(NNHMError):
    """Too many Monte Carlo replicates failed."""
