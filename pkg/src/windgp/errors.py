"""Exception types raised across the package."""


class WindGPError(Exception):
    """Base class for all package errors."""


class UndefinedWindError(WindGPError, ValueError):
    """A wind vector with zero (or non-finite) magnitude."""


class CoincidentSitesError(WindGPError, ValueError):
    """An operation that needs two distinct sites received the same one twice."""


class ConfigError(WindGPError, ValueError):
    """Model specification, parameter block, or run configuration is inconsistent."""


class DataError(WindGPError, ValueError):
    """A dataset file failed to parse or violates its invariants."""


class NumericalError(WindGPError, ArithmeticError):
    """A factorization failed even after jitter escalation.

    ``state`` carries whatever context the caller had (usually the offending
    parameter state) so chain failures can be dumped for diagnosis.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
