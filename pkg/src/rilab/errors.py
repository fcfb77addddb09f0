"""Exception hierarchy shared by all modules."""


class RilabError(Exception):
    """Base class for package errors."""


class ArgumentError(RilabError, ValueError):
    """An argument violates an operation's precondition."""


class DomainError(RilabError, ValueError):
    """The requested quantity is not defined (e.g. Green function for d < 3)."""


class ConfigurationError(RilabError, ValueError):
    """Parameters are individually valid but jointly unusable."""


class CapacityError(RilabError, MemoryError):
    """The requested object exceeds a configured size budget."""


class NumericalError(RilabError, ArithmeticError):
    """A numerical procedure failed (e.g. a non-SPD Gram matrix after jitter)."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ScaleOverflowError(RilabError, OverflowError):
    """A scale or coordinate left the signed 64-bit range."""
