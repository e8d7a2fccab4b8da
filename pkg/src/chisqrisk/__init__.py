"""Perturbed chi-square risks: exact laws, conditional samplers, limit laws and a verification harness."""

from .errors import ConvergenceError, DomainError, FactorizationError, RareEventError
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "FactorizationError",
    "RandomStream",
    "RareEventError",
    "__version__",
]
