"""Spectral risk minimisation with a stabilised stochastic primal-dual method."""

from .objective import Dataset, ObjectiveModel, SampleCounter
from .permutahedron import contains, isotonic_regression, lmo, project
from .spectra import (
    SpectralWeights,
    cvar_weights,
    esrm_weights,
    extremile_weights,
    make_spectrum,
    sort_permutation,
    spectral_risk,
    uniform_weights,
)

__version__ = "0.1.0"
