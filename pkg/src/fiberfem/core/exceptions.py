"""Custom exceptions for FiberFEM."""

from typing import Any


class FiberFemError(Exception):
    """Base exception for FiberFEM."""

    def __init__(
        self,
        message: str,
        code: str = "INTERNAL_ERROR",
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        """Convert exception to dictionary representation."""
        return {
            "code": self.code,
            "message": self.message,
            "details": self.details,
        }


class ConfigurationError(FiberFemError):
    """Raised when a problem configuration is invalid."""

    def __init__(
        self,
        message: str,
        config_key: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="CONFIGURATION_ERROR",
            details={**(details or {}), "config_key": config_key},
        )
        self.config_key = config_key


class MeshError(FiberFemError):
    """Raised when a mesh cannot be built or read."""

    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message=message, code="MESH_ERROR", details=details)


class AssemblyError(FiberFemError):
    """Raised when finite element assembly fails."""

    def __init__(
        self,
        message: str,
        triangle: int | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="ASSEMBLY_ERROR",
            details={**(details or {}), "triangle": triangle},
        )
        self.triangle = triangle


class LinearSolverError(FiberFemError):
    """Raised when a linear solve or factorization breaks down."""

    def __init__(
        self,
        message: str,
        iterations: int | None = None,
        residual: float | None = None,
        pivot: int | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="LINEAR_SOLVER_ERROR",
            details={
                **(details or {}),
                "iterations": iterations,
                "residual": residual,
                "pivot": pivot,
            },
        )
        self.iterations = iterations
        self.residual = residual
        self.pivot = pivot


class ConvergenceError(FiberFemError):
    """Raised when an iterative nonlinear method does not converge."""

    def __init__(
        self,
        message: str,
        stage: str | None = None,
        residual: float | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="CONVERGENCE_ERROR",
            details={**(details or {}), "stage": stage, "residual": residual},
        )
        self.stage = stage
        self.residual = residual


class InversionError(FiberFemError):
    """Raised when the finite-dimensional inversion of the fiber map fails."""

    def __init__(
        self,
        message: str,
        stage: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="INVERSION_ERROR",
            details={**(details or {}), "stage": stage},
        )
        self.stage = stage


class DataFileError(FiberFemError):
    """Raised when a data file cannot be read or written."""

    def __init__(
        self,
        message: str,
        path: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message=message,
            code="IO_ERROR",
            details={**(details or {}), "path": path},
        )
        self.path = path
