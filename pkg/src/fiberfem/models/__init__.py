"""Data models for FiberFEM."""

from .common import ErrorDetail
from .problem import (
    ContinuationConfig,
    InversionConfig,
    MeshConfig,
    NonlinearityConfig,
    ProblemConfig,
    RhsConfig,
    ToleranceConfig,
    TraceConfig,
)
from .results import (
    DoublePointRecord,
    EigenRecord,
    MeshCheck,
    MeshReport,
    RunManifest,
    SolutionRecord,
)

__all__ = [
    # Common
    "ErrorDetail",
    # Problem
    "MeshConfig",
    "NonlinearityConfig",
    "RhsConfig",
    "ToleranceConfig",
    "ContinuationConfig",
    "TraceConfig",
    "InversionConfig",
    "ProblemConfig",
    # Results
    "MeshCheck",
    "MeshReport",
    "EigenRecord",
    "SolutionRecord",
    "DoublePointRecord",
    "RunManifest",
]
