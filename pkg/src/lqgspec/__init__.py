"""Discrete Liouville quantum gravity: fields, Liouville measures, spectra and path Monte Carlo."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CapExceededError,
    ConvergenceError,
    DomainError,
    EmptyRegionError,
    GridMismatchError,
    InsufficientProbesError,
    InvalidSpecError,
    LQGError,
    PreconditionError,
    QuadratureError,
    ResolutionError,
)
from .field import GridField, GridSpec, discrete_green, sample_gff  # noqa: F401
from .gmc import LiouvilleMeasure, build_measure  # noqa: F401
from .spectral import Spectrum, assemble_pair, solve_spectrum  # noqa: F401
from .stats import c_gamma, counting_function, spacing_stats, weyl_fit  # noqa: F401
