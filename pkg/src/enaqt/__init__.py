"""Boundary-driven generalized Aubry-Andre-Harper chain with dephasing.

Exact nonequilibrium steady state, heat current and environment-assisted
transport diagnostics, with brute-force validators and a sweep engine.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    CutoffError,
    DomainError,
    EigensolverError,
    EnaqtError,
    ParameterError,
)
from .model import ChainParams, Spectrum, build_hamiltonian, diagonalize, mobility_edge, spectrum
from .ness import BathConfig, SpectralDensity, steady_state
from .observables import ObservableSet, PointEvaluator, evaluate_point

__all__ = [
    "BathConfig",
    "ChainParams",
    "ConvergenceError",
    "CutoffError",
    "DomainError",
    "EigensolverError",
    "EnaqtError",
    "ObservableSet",
    "ParameterError",
    "PointEvaluator",
    "SpectralDensity",
    "Spectrum",
    "build_hamiltonian",
    "diagonalize",
    "evaluate_point",
    "mobility_edge",
    "spectrum",
    "steady_state",
]
