"""Result and report models written by the solver."""

from pydantic import BaseModel, Field

from .common import ErrorDetail


class MeshCheck(BaseModel):
    """Outcome of one mesh invariant."""

    name: str = Field(..., description="Invariant name")
    passed: bool = Field(..., description="Whether the invariant holds")
    message: str = Field(default="", description="Human-readable detail")


class MeshReport(BaseModel):
    """Diagnostic report of mesh validation."""

    checks: list[MeshCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Check if every invariant holds."""
        return all(check.passed for check in self.checks)

    def failures(self) -> list[str]:
        """Names of failed invariants."""
        return [check.name for check in self.checks if not check.passed]


class EigenRecord(BaseModel):
    """Eigen output file."""

    eigenvalues: list[float] = Field(..., description="Nondecreasing generalized eigenvalues")
    eigenvectors_file: str = Field(..., description="CSV with one column per eigenvector")
    residuals: list[float] = Field(..., description="||K psi - lambda M psi|| / ||K psi||")


class SolutionRecord(BaseModel):
    """One entry of the solutions JSON file."""

    height: list[float] = Field(..., description="heights_X of the solution")
    residual: float = Field(..., ge=0, description="||F(u) - g||_Y")
    values_file: str = Field(..., description="CSV with the interior values of u")
    label: str | None = Field(default=None, description="Name in a construction (U, D, L, R)")


class DoublePointRecord(BaseModel):
    """Self-intersection of a sampled image curve."""

    point: list[float] = Field(..., description="Intersection Z in the image plane")
    parameters: list[float] = Field(..., description="Curve parameters (s1, s2), s1 < s2")


class RunManifest(BaseModel):
    """Summary of one CLI command."""

    command: str
    config_hash: str | None = None
    mesh: dict[str, float] = Field(default_factory=dict)
    eigenvalues: list[float] = Field(default_factory=list)
    index_set: list[int] = Field(default_factory=list)
    tolerances: dict[str, float] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    failures: list[ErrorDetail] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        """Check if the command met every advertised tolerance."""
        return not self.failures
