"""Problem configuration models (the ProblemSpec JSON schema)."""

from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator


class MeshConfig(BaseModel):
    """Uniform rectangle mesh parameters."""

    nx: int = Field(default=32, ge=1, description="Cells along x")
    ny: int = Field(default=64, ge=1, description="Cells along y")
    width: float = Field(default=1.0, gt=0, description="Rectangle width")
    height: float = Field(default=2.0, gt=0, description="Rectangle height")


class NonlinearityConfig(BaseModel):
    """Nonlinearity selection.

    Parameters by type:
    - atan: ``alpha`` and ``beta``, or the open range ``lower``/``upper`` of f'
    - nonconvex: ``low``, ``high``, ``width`` and optional ``ceiling``
    - linear: ``c``
    """

    type: Literal["atan", "nonconvex", "linear"] = Field(..., description="Nonlinearity family")
    params: dict[str, float] = Field(default_factory=dict, description="Family parameters")


class RhsConfig(BaseModel):
    """Right-hand side selection."""

    type: Literal["biquadratic", "zero", "custom_csv", "fiber_through"] = Field(
        ...,
        description="biquadratic: scale*x(x-1)y(y-2); fiber_through: g = F(u0)",
    )
    scale: float = Field(default=1.0, description="Multiplier of the biquadratic field")
    path: str | None = Field(
        default=None,
        description="CSV with header node_index,value holding an explicit dual vector",
    )

    @model_validator(mode="after")
    def _csv_needs_path(self) -> "RhsConfig":
        if self.type == "custom_csv" and not self.path:
            raise ValueError("rhs type custom_csv requires a path")
        return self


class ToleranceConfig(BaseModel):
    """Solver tolerances (Y-norm residuals)."""

    fiber: float = Field(default=1e-8, gt=0, description="Bound on ||Q_Y(F(u) - g)||_Y")
    solution: float = Field(default=1e-6, gt=0, description="Bound on ||F(u) - g||_Y")


class ContinuationConfig(BaseModel):
    """Continuation/Newton schedule of the fiber search."""

    steps: int = Field(default=10, ge=1, le=10000, description="Uniform homotopy steps")
    max_newton: int = Field(default=25, ge=1, le=1000, description="Newton iterations per step")
    min_step: float = Field(default=2.0**-20, gt=0, lt=1, description="Smallest homotopy step")


class TraceConfig(BaseModel):
    """Height window sampled along the fiber."""

    t_min: float = Field(default=-80.0)
    t_max: float = Field(default=80.0)
    steps: int = Field(default=80, ge=0, description="Number of height intervals")
    direction: list[float] = Field(default_factory=lambda: [1.0])

    @model_validator(mode="after")
    def _ordered(self) -> "TraceConfig":
        if self.t_max < self.t_min:
            raise ValueError("t_max must not be smaller than t_min")
        return self


class InversionConfig(BaseModel):
    """Paths used by the two-dimensional inversion recipe."""

    circle_radius: float = Field(default=20.0, gt=0, description="Circle radius in heights")
    circle_resolution: int = Field(default=128, ge=8)
    ray_length: float = Field(default=200.0, gt=0, description="Half-axis scan length in heights")
    ray_resolution: int = Field(default=100, ge=2)


class ProblemConfig(BaseModel):
    """Full definition of one solver run."""

    name: str = Field(default="custom", min_length=1, max_length=200)
    description: str = Field(default="")
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    nonlinearity: NonlinearityConfig
    rhs: RhsConfig = Field(default_factory=lambda: RhsConfig(type="zero"))
    interval: tuple[float, float] = Field(..., description="Spectral interval [a~, b~]")
    tol: ToleranceConfig = Field(default_factory=ToleranceConfig)
    continuation: ContinuationConfig = Field(default_factory=ContinuationConfig)
    k: int = Field(default=4, ge=1, le=200, description="Number of eigenpairs computed")
    start: dict[int, float] = Field(
        default_factory=dict,
        description="u0 = sum_j c_j phi_j^X, keyed by 1-based eigen label",
    )
    trace: TraceConfig = Field(default_factory=TraceConfig)
    inversion: InversionConfig = Field(default_factory=InversionConfig)

    @field_validator("interval")
    @classmethod
    def _interval_ordered(cls, value: tuple[float, float]) -> tuple[float, float]:
        if value[0] > value[1]:
            raise ValueError("interval must satisfy a~ <= b~")
        return value

    @field_validator("start")
    @classmethod
    def _labels_positive(cls, value: dict[int, float]) -> dict[int, float]:
        if any(label < 1 for label in value):
            raise ValueError("eigen labels start at 1")
        return value

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "name": "example1",
                    "mesh": {"nx": 32, "ny": 64, "width": 1.0, "height": 2.0},
                    "nonlinearity": {
                        "type": "atan",
                        "params": {"lower": 8.635903850953189, "upper": 16.038107151770207},
                    },
                    "rhs": {"type": "biquadratic", "scale": -100.0},
                    "interval": [8.6, 16.1],
                    "tol": {"fiber": 1e-8, "solution": 1e-6},
                    "k": 4,
                }
            ]
        }
    }
