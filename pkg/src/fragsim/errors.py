"""Exception types raised by fragsim."""


class FragsimError(Exception):
    """Base class for all package errors."""


class ConfigError(FragsimError, ValueError):
    """Invalid parameters or configuration."""


class NumericError(FragsimError, ArithmeticError):
    """A numerical procedure failed (CFL, negative mass, quadrature)."""


class CFLError(NumericError):
    pass


class NegativeMassError(NumericError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class QuadratureError(NumericError):
    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


class NoStationaryProfileError(FragsimError, ValueError):
    """E(-log theta) is infinite, so no integrable self-similar profile exists."""


class DivergenceWarning(UserWarning):
    pass
