"""Pytest fixtures for FiberFEM tests."""

import os
from pathlib import Path

import pytest

# Set test environment variables before importing package modules
os.environ["FIBERFEM_LOG"] = "quiet"
os.environ["FIBERFEM_THREADS"] = "1"

from fiberfem.engine.assembly import FemSystem  # noqa: E402
from fiberfem.engine.mesh import Mesh, uniform_rectangle_mesh  # noqa: E402
from fiberfem.engine.problems import ProblemRegistry, ProblemSpec  # noqa: E402
from fiberfem.services import DiscretizationCache, FiberPipeline  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


def small(spec: ProblemSpec, nx: int = 8, ny: int = 16, **updates: object) -> ProblemSpec:
    """Copy of a problem on a coarser mesh."""
    mesh = {**spec.config.mesh.model_dump(), "nx": nx, "ny": ny}
    return spec.with_updates(mesh=mesh, **updates)


@pytest.fixture(scope="session")
def registry() -> ProblemRegistry:
    """Registry of the shipped problem configurations."""
    return ProblemRegistry(CONFIG_DIR)


@pytest.fixture(scope="session")
def pipeline() -> FiberPipeline:
    """Pipeline with a session-wide discretization cache."""
    return FiberPipeline(cache=DiscretizationCache(max_size=32))


@pytest.fixture
def mesh_2x2() -> Mesh:
    """2x2 mesh of [0,1]x[0,2] (one interior vertex)."""
    return uniform_rectangle_mesh(1.0, 2.0, 2, 2)


@pytest.fixture(scope="session")
def mesh_8x16() -> Mesh:
    """8x16 mesh of [0,1]x[0,2]."""
    return uniform_rectangle_mesh(1.0, 2.0, 8, 16)


@pytest.fixture(scope="session")
def system_8x16(mesh_8x16: Mesh) -> FemSystem:
    """Assembled operators of the 8x16 mesh."""
    return FemSystem.assemble(mesh_8x16)


@pytest.fixture(scope="session")
def example1_small(registry: ProblemRegistry) -> ProblemSpec:
    """Example 1 on the 8x16 mesh."""
    return small(registry.get("example1"))


@pytest.fixture(scope="session")
def example3_small(registry: ProblemRegistry) -> ProblemSpec:
    """Example 3 on the 8x16 mesh."""
    return small(registry.get("example3"))


@pytest.fixture(scope="session")
def linear_small(registry: ProblemRegistry) -> ProblemSpec:
    """Linear problem f(u) = 16 u on the 8x16 mesh."""
    return small(registry.get("linear"))


@pytest.fixture(scope="session")
def coarse():  # type: ignore[no-untyped-def]
    """Helper turning a problem into a copy on a coarser mesh."""
    return small
