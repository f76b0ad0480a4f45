"""Application configuration using Pydantic Settings."""

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Solver settings loaded from environment variables (prefix ``FIBERFEM_``)."""

    model_config = SettingsConfigDict(
        env_prefix="FIBERFEM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log: Literal["quiet", "info", "debug"] = Field(
        default="info",
        description="Log verbosity (FIBERFEM_LOG)",
    )
    log_format: Literal["console", "json"] = Field(
        default="console",
        description="Console renderer for terminals, JSON lines for pipelines",
    )

    # Parallelism
    threads: int = Field(
        default=1,
        ge=1,
        le=256,
        description="Worker threads for element assembly and path fan-out",
    )

    # Problem configurations
    config_dir: Path | None = Field(
        default=None,
        description="Directory holding problems/*.json (defaults to the repository config/)",
    )

    # Linear algebra
    spd_tolerance: float = Field(
        default=1e-10,
        gt=0,
        lt=1e-2,
        description="Relative residual bound for SPD solves",
    )
    krylov_tolerance: float = Field(
        default=1e-9,
        gt=0,
        lt=1e-2,
        description="Relative residual bound for extended-Jacobian solves",
    )
    krylov_restart: int = Field(
        default=50,
        ge=5,
        le=1000,
        description="GMRES restart length",
    )
    dense_fallback_limit: int = Field(
        default=2000,
        ge=1,
        description="Largest interior size for which the dense oracle may be assembled",
    )
    eigen_tolerance: float = Field(
        default=1e-10,
        gt=0,
        le=1e-8,
        description="Relative eigen-residual target of the subspace iteration",
    )
    eigen_max_sweeps: int = Field(
        default=200,
        ge=1,
        description="Maximum subspace iteration sweeps",
    )

    # Cache
    cache_max_size: int = Field(
        default=8,
        ge=1,
        le=1024,
        description="Number of discretizations (mesh, FEM system, eigenbasis) kept in memory",
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Global settings instance
settings = get_settings()
