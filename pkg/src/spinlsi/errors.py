"""Exception types shared across the package."""


class SpinLSIError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SpinLSIError, ValueError):
    """Invalid model, grid or experiment configuration."""


class ConfigurationIncompleteError(SpinLSIError, KeyError):
    """A neighbour value required by the Hamiltonian is missing."""


class BudgetError(SpinLSIError, MemoryError):
    """A dense tensor would exceed the configured element budget."""


class NumericalDegeneracyError(SpinLSIError, FloatingPointError):
    """A normalisation underflowed or produced a non-finite value."""


class PartitionError(SpinLSIError, ValueError):
    """A block of sites contains adjacent sites."""


class DomainError(SpinLSIError, ValueError):
    """An argument lies outside the domain of a functional."""


class DivergenceError(SpinLSIError, ArithmeticError):
    """A geometric series does not converge."""


class OracleFailure(SpinLSIError, RuntimeError):
    """A brute-force fixed-point iteration failed to converge."""
