"""Exception hierarchy shared across the lab."""


class AtlError(Exception):
    """Base class for every error raised by atl."""


class ConfigError(AtlError, ValueError):
    pass


class StencilError(AtlError, IndexError):
    """Index too close to the grid boundary for a centered stencil."""


class OutOfDomainError(AtlError, ValueError):
    pass


class NumericalInstabilityError(AtlError, FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DegenerateFieldError(AtlError, ValueError):
    pass


class SamplingError(AtlError, RuntimeError):
    pass


class InsufficientSamplingError(SamplingError):
    pass


class ContractError(AtlError, ValueError):
    """A documented precondition of an analysis routine was violated."""
