"""Leggett-Garg coherence tests for neutrino oscillation data."""

from .errors import ComparisonError, DataError, DomainError, NulgiError
from .oscillation import (
    BEST_FIT,
    FlavorChannel,
    OscillationParams,
    bin_averaged_probability,
    build_pmns,
    load_params,
    oscillation_probability,
)

__version__ = "0.1.0"
