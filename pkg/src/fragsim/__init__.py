"""Homogeneous fragmentation: stochastic simulation, stationary profiles and
a finite-volume solver for the growth-fragmentation equation."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CFLError,
    ConfigError,
    DivergenceWarning,
    FragsimError,
    NegativeMassError,
    NoStationaryProfileError,
    NumericError,
    QuadratureError,
)
from .grid import LogGrid  # noqa: F401
from .kernel import Mixture, PowerLaw, Tabulated, make_kernel  # noqa: F401
from .process import ProcessParams  # noqa: F401
