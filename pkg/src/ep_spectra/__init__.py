"""Numerical tools for spectra near exceptional points.

Finite Jordan-block models and their perturbation unfolding, plus the
imaginary cubic oscillator in a truncated oscillator basis with eigenbasis
diagnostics, a chain basis and a first-order perturbation scheme.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ChainBreakdown,
    DegenerateClosure,
    DegenerateData,
    DegenerateSpectrum,
    EPSpectraError,
    InsufficientConvergence,
    NoCoalescence,
    NoConvergence,
    NotAnEP,
    NumericalFailure,
    RootFindingFailure,
    SeriesDiverges,
    SingularMatrix,
)
from .numerics import SpectralData, eig_biorthogonal, min_singular_value, solve_linear  # noqa: F401
