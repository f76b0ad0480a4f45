"""Solver pipeline: discretize a problem, then trace, solve or invert."""

from __future__ import annotations

import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..core import ConfigurationError, MeshError, get_logger, settings
from ..engine.assembly import FemSystem
from ..engine.decomposition import Decomposition, ensure_complete, index_set, orient_eigenvectors
from ..engine.fiber import DiscreteProblem, FiberSolver, FiberTrace
from ..engine.inversion import CrossingReport, FourSolutions, four_solution_construction, solve_1d
from ..engine.linear_solvers import SpdFactorization, smallest_eigenpairs
from ..engine.mesh import uniform_rectangle_mesh, validate
from ..engine.problems import ProblemSpec
from .cache import Discretization, DiscretizationCache
from .io import read_vector_csv

logger = get_logger(__name__)


@dataclass
class OneDimensionalRun:
    """Output of the full one-dimensional pipeline."""

    problem: DiscreteProblem
    trace: FiberTrace
    report: CrossingReport
    timings: dict[str, float] = field(default_factory=dict)


class FiberPipeline:
    """Service running the solver stages for problem specifications.

    Discretizations (mesh, operators, eigenbasis) are shared through a
    :class:`DiscretizationCache`, so problems on the same mesh reuse one
    assembly and one eigen solve.
    """

    def __init__(
        self,
        cache: DiscretizationCache | None = None,
        threads: int | None = None,
        dense: bool = False,
    ) -> None:
        """Initialize the pipeline.

        Args:
            cache: Discretization cache (creates default if not provided)
            threads: Worker threads for assembly and path fan-out (default from settings)
            dense: Use the dense extended-Jacobian oracle
        """
        self._cache = cache or DiscretizationCache()
        self.threads = threads or settings.threads
        self.dense = dense
        self.timings: dict[str, float] = {}
        logger.debug("pipeline_initialized", threads=self.threads, dense=dense)

    @contextmanager
    def _timed(self, stage: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - start

    def discretization(self, spec: ProblemSpec) -> Discretization:
        """Mesh, operators and oriented eigenbasis of a problem (cached).

        Raises:
            MeshError: If the mesh fails validation
            ConfigurationError: If k exceeds the interior size
            ConvergenceError: If the eigen solve does not converge
        """
        mesh_cfg = spec.config.mesh
        k = spec.config.k
        cached = self._cache.get(mesh_cfg, k)
        if cached is not None:
            return cached

        with self._timed("mesh"):
            mesh = uniform_rectangle_mesh(mesh_cfg.width, mesh_cfg.height, mesh_cfg.nx, mesh_cfg.ny)
            report = validate(mesh)
            if not report.passed:
                raise MeshError("Mesh failed validation", {"failures": report.failures()})
        with self._timed("assembly"):
            system = FemSystem.assemble(mesh, threads=self.threads)
        with self._timed("eigen"):
            spd = SpdFactorization(system.stiffness)
            basis = smallest_eigenpairs(system.stiffness, system.mass, k, factorization=spd)
            basis = orient_eigenvectors(basis, system.mass)

        value = Discretization(mesh=mesh, system=system, spd=spd, basis=basis)
        self._cache.set(mesh_cfg, k, value)
        return value

    def discretize(self, spec: ProblemSpec) -> DiscreteProblem:
        """Bind a problem to its discretization: index set, RHS and start.

        Raises:
            ConfigurationError: If the computed spectrum does not cover the
                interval, or a start label exceeds k
        """
        disc = self.discretization(spec)
        eigenvalues = disc.basis.eigenvalues
        ensure_complete(eigenvalues, spec.interval)
        labels = index_set(eigenvalues, spec.interval)
        decomposition = Decomposition.build(
            disc.basis, labels, disc.system.stiffness, disc.system.mass, disc.spd
        )
        start = self._start(spec, disc)
        rhs = self._rhs(spec, disc, start)
        logger.info(
            "problem_discretized",
            problem=spec.name,
            interior=disc.system.size,
            index_set=labels,
            eigenvalues=[float(x) for x in eigenvalues],
        )
        return DiscreteProblem(
            spec=spec,
            system=disc.system,
            basis=disc.basis,
            decomposition=decomposition,
            rhs=rhs,
            start=start,
        )

    def solver(self, spec: ProblemSpec) -> FiberSolver:
        return FiberSolver(self.discretize(spec), dense=self.dense)

    @staticmethod
    def _start(spec: ProblemSpec, disc: Discretization) -> NDArray[np.float64]:
        u0 = np.zeros(disc.system.size)
        basis = disc.basis
        for label, coefficient in spec.config.start.items():
            if label > basis.count:
                raise ConfigurationError(
                    f"Start label {label} exceeds the {basis.count} computed eigenpairs",
                    config_key="start",
                )
            u0 += coefficient * basis.eigenvectors[:, label - 1] / np.sqrt(basis.eigenvalues[label - 1])
        return u0

    @staticmethod
    def _rhs(spec: ProblemSpec, disc: Discretization, start: NDArray[np.float64]) -> NDArray[np.float64]:
        system = disc.system
        rhs = spec.config.rhs
        if rhs.type == "zero":
            return np.zeros(system.size)
        if rhs.type == "fiber_through":
            f = spec.nonlinearity.f
            return np.asarray(system.stiffness @ start - system.nonlinear_load(start, f))
        if rhs.type == "custom_csv":
            path = spec.rhs_path()
            assert path is not None
            return read_vector_csv(path, size=system.size)
        field_fn = spec.rhs_field()
        assert field_fn is not None
        return system.load(field_fn)

    def trace(self, spec: ProblemSpec, solver: FiberSolver | None = None) -> FiberTrace:
        """Fiber trace over the configured height window."""
        solver = solver or self.solver(spec)
        cfg = spec.config.trace
        with self._timed("trace"):
            return solver.trace_fiber(cfg.t_min, cfg.t_max, cfg.steps, cfg.direction)

    def solve_1d(self, spec: ProblemSpec) -> OneDimensionalRun:
        """Eigen, fiber trace and crossing search for a problem with |J| = 1."""
        self.timings = {}
        solver = self.solver(spec)
        trace = self.trace(spec, solver)
        with self._timed("solve"):
            report = solve_1d(solver, trace)
        return OneDimensionalRun(
            problem=solver.problem, trace=trace, report=report, timings=dict(self.timings)
        )

    def four_solutions(self, spec: ProblemSpec) -> FourSolutions:
        """Circle and half-axis construction for a problem with |J| = 2."""
        self.timings = {}
        solver = self.solver(spec)
        with self._timed("inversion"):
            return four_solution_construction(solver, threads=self.threads)

    def get_cache_stats(self) -> dict[str, object]:
        return self._cache.get_stats()
