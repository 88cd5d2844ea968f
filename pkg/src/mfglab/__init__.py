"""Variational mean field games with congestion on the periodic grid."""

from .congestion_models import CongestionModel, make_model
from .grid_core import Grid
from .regularity_analysis import AnalysisConfig, analyze
from .solver_alg2 import DualState, ProblemSpec, SolveReport, solve
from .transport import PrimalState, w2_circle

__all__ = [
    "AnalysisConfig",
    "CongestionModel",
    "DualState",
    "Grid",
    "PrimalState",
    "ProblemSpec",
    "SolveReport",
    "analyze",
    "make_model",
    "solve",
    "w2_circle",
]
