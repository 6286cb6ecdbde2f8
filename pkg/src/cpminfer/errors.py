"""Exception types shared across the package."""


class CpmInferError(Exception):
    """Base class for errors raised by this package."""


class DomainError(CpmInferError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class NumericDomainError(CpmInferError, ArithmeticError):
    """A computation left the representable floating-point range."""


class CapabilityError(CpmInferError, TypeError):
    """The model lacks an optional hook required by the requested operation."""


class PreconditionError(CpmInferError, ValueError):
    """Arguments violate a documented precondition."""


class PositivityError(CpmInferError, ValueError):
    """The observed solution component is not strictly positive.

    The logarithmic observation map is only defined for models whose
    observed component stays positive on the whole time window.
    """


class IllConditionedError(CpmInferError, ValueError):
    """A pointwise linear solve is too ill-conditioned to trust.

    Carries the offending covariate point in ``covariate``.
    """

    def __init__(self, message, covariate=None, condition=None):
        super().__init__(message)
        self.covariate = covariate
        self.condition = condition


class InsufficientSamplesError(CpmInferError, RuntimeError):
    """A chain is too short (effective sample size too small) for a diagnostic."""


class ChainDivergenceError(CpmInferError, RuntimeError):
    """The sampler could not find an acceptable step size."""


class ConfigError(CpmInferError, ValueError):
    """An experiment configuration file is invalid."""
