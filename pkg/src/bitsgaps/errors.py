"""Exception hierarchy shared by every module."""


class BitsError(Exception):
    """Base class for all package errors."""


class InputError(BitsError, ValueError):
    """Malformed or inconsistent input (shapes, counts, missing data)."""


class DomainError(BitsError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ConfigurationError(BitsError, ValueError):
    """Unsupported option or invalid configuration."""


class NumericalError(BitsError, ArithmeticError):
    """Factorization failure, non-convergence, or similar numerical breakdown."""


class SpecificationError(BitsError, ValueError):
    """Infeasible column or phase-equilibrium specification."""
