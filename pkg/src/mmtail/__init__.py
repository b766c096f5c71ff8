"""Tail analysis of Markov-modulated random linear recursions ``S_n = A_n + B_n S_{n-1}``."""
from .errors import AssumptionViolation, DivergenceSuspected, InvalidModel, NumericalFailure
from .model import EdgeLaw, MmpModel, PathSample, ValidationReport, sample_path, stationary_distribution, validate

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "DivergenceSuspected",
    "EdgeLaw",
    "InvalidModel",
    "MmpModel",
    "NumericalFailure",
    "PathSample",
    "ValidationReport",
    "sample_path",
    "stationary_distribution",
    "validate",
]
