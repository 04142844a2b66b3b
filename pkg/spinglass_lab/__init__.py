__version__ = "0.1.0"

from .core import CovarianceSeries, OrderParameter
from .exceptions import InvalidInput, LabError, NumericalFailure
from .params import RunConfig
from .parisi import SolverSettings, parisi_functional, solve_recursive
from .utils import Estimate, SeedSpec

__all__ = [
    "CovarianceSeries",
    "Estimate",
    "InvalidInput",
    "LabError",
    "NumericalFailure",
    "OrderParameter",
    "RunConfig",
    "SeedSpec",
    "SolverSettings",
    "parisi_functional",
    "solve_recursive",
]
