"""Exception hierarchy shared by all modules."""


class FluxRegError(Exception):
    """Base class for every error raised by :mod:`fluxreg`."""


class InvalidStructure(FluxRegError, ValueError):
    pass


class IndexOutOfRange(InvalidStructure):
    """Structure indices violate ``-1 < i_a <= s_a < inf``."""


class QuadratureFailure(FluxRegError, ArithmeticError):
    pass


class DegeneratePair(FluxRegError, ValueError):
    pass


class ZeroMatrix(FluxRegError, ValueError):
    pass


class BudgetTooSmall(FluxRegError, ValueError):
    pass


class VanishingGradient(FluxRegError, ValueError):
    pass


class EmptySamples(FluxRegError, ValueError):
    pass


class BadConstant(FluxRegError, ValueError):
    pass


class DomainError(FluxRegError, ValueError):
    """Invalid domain specification or access to exterior nodes."""


class NewtonStall(FluxRegError, RuntimeError):
    pass


class LinearSolveFailure(FluxRegError, RuntimeError):
    pass


class IncompatibleData(FluxRegError, ValueError):
    """Neumann data violates the zero-mean compatibility condition."""


class ResidualTooLarge(FluxRegError, ValueError):
    pass


class BallNotInterior(FluxRegError, ValueError):
    pass


class ParameterOutOfRange(FluxRegError, ValueError):
    pass


class ConfigError(FluxRegError, ValueError):
    pass


class SingularFluxWarning(RuntimeWarning):
    """Flux evaluated where ``a`` is singular and the gradient vanishes."""
