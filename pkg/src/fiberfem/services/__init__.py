"""Services: discretization cache, pipeline and result files."""

from .cache import Discretization, DiscretizationCache
from .pipeline import FiberPipeline, OneDimensionalRun

__all__ = [
    "Discretization",
    "DiscretizationCache",
    "FiberPipeline",
    "OneDimensionalRun",
]
