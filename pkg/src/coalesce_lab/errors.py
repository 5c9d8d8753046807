"""Exception types shared across the package."""


class CoalesceLabError(Exception):
    """Base class for all package errors."""


class DomainError(CoalesceLabError, ValueError):
    """An argument lies outside the domain of a formula."""


class ContractViolation(CoalesceLabError, ValueError):
    """A structural precondition (shape, ordering, parity) does not hold."""


class SizeError(CoalesceLabError, ValueError):
    """A problem is larger than the desk-scale caps allow."""


class AccuracyError(CoalesceLabError, ArithmeticError):
    """A numerical result failed its own accuracy check."""


class ConfigurationError(CoalesceLabError, ValueError):
    """An experiment or simulation configuration is unusable."""


class SampleSizeError(CoalesceLabError, ValueError):
    """Too few observations for the requested estimator."""
