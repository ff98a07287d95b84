"""Monitored recurrence for quantum channels and quantum Markov chains."""

__version__ = "0.1.0"

from .channels import KrausMap, SuperOperator
from .config import DEFAULT, Tolerances
from .recurrence import Admissible, General, SchurFn, recurrence_report
from .tom import Tom, TomDensity

__all__ = [
    "KrausMap", "SuperOperator", "Tolerances", "DEFAULT",
    "Admissible", "General", "SchurFn", "recurrence_report",
    "Tom", "TomDensity", "__version__",
]
