"""Exception types shared across the package."""


class KmmrError(Exception):
    """Base class for all package errors."""


class NumericalFailure(KmmrError):
    """A numerical routine failed (non-convergence, indefinite matrix, NaN loss)."""


class DimensionError(KmmrError):
    """Operands have incompatible shapes."""


class DomainError(KmmrError):
    """An argument lies outside the mathematical domain of the operation."""


class DegenerateSample(KmmrError):
    """A sample is too degenerate for the requested statistic (e.g. zero variance)."""


class DegenerateKernel(KmmrError):
    """A kernel matrix is degenerate (e.g. identically zero)."""


class ConfigError(KmmrError):
    """Invalid configuration value, label, or schema violation."""
