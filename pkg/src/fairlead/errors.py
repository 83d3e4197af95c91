"""Exception taxonomy shared across the library.

The CLI maps each class to a distinct exit code; library code raises these
instead of bare ValueError/RuntimeError so callers can tell misuse apart
from bad configuration.
"""


class FairleadError(Exception):
    """Base class for all library errors."""


class ConfigurationError(FairleadError):
    """Invalid configuration: bad keys, incompatible sizes, unknown variants."""


class UsageError(FairleadError):
    """An operation was called in a state where it is not defined."""


class DomainError(FairleadError):
    """Input outside the mathematical domain of an operation."""


class ConvergenceError(FairleadError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
