"""Fiber search and tracing.

A fiber point at height v is a solution u of Q_Y(F(u) - g) = 0 with
heights_X(u) = v. It is found by a homotopy on the residual target solved with
Newton's method inside the horizontal affine subspace; each Newton step solves
with the extended Jacobian L_u z = K z - Q_Y(A Q_X z).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..core import ConfigurationError, ConvergenceError, LinearSolverError, get_logger
from .assembly import FemSystem
from .decomposition import Decomposition
from .linear_solvers import EigenBasis, SpdFactorization, extended_jacobian_solve
from .problems import ProblemSpec

logger = get_logger(__name__)

Vector = NDArray[np.float64]

LOWER_BOUND_ITERATIONS = 40
LOWER_BOUND_RTOL = 1e-8


class _NewtonFailure(Exception):
    pass


@dataclass
class NewtonOutcome:
    """Result of :func:`continuation_newton`.

    Attributes:
        x: Converged iterate
        residual: Final residual norm
        iterations: Newton iterations over all accepted steps
        steps: Accepted continuation steps
        history: Residual norms of the final continuation step
    """

    x: Vector
    residual: float
    iterations: int
    steps: int
    history: list[float] = field(default_factory=list)


def continuation_newton(
    residual: Callable[[Vector], Vector],
    solve: Callable[[Vector, Vector], Vector],
    x0: Vector,
    norm: Callable[[Vector], float],
    tol: float,
    steps: int = 10,
    max_newton: int = 25,
    min_step: float = 2.0**-20,
    project: Callable[[Vector], Vector] | None = None,
    monitor: Callable[[Vector], None] | None = None,
    stage: str = "continuation",
) -> NewtonOutcome:
    """Solve R(x) = 0 by following R(x) = t R(x0) from t = 1 down to t = 0.

    Each homotopy step runs undamped Newton, ``x += project(solve(x, -r))``.
    A failed step (iteration cap or non-finite values) is retried with half
    the step; two consecutive successes double it again up to the nominal
    1/steps.

    Args:
        residual: Map x -> R(x)
        solve: (x, rhs) -> DR(x)^-1 rhs
        x0: Starting point
        norm: Residual norm
        tol: Newton stopping tolerance on norm(R(x) - target)
        steps: Nominal number of uniform homotopy steps
        max_newton: Newton iterations per step
        min_step: Smallest homotopy step before giving up
        project: Map applied to every Newton update
        monitor: Called with every Newton iterate
        stage: Stage name used in errors and logs

    Raises:
        ConvergenceError: If the step falls below ``min_step`` or R(x0) is not finite
        LinearSolverError: Propagated from ``solve``
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    r0 = residual(x)
    n0 = norm(r0)
    if not np.isfinite(n0):
        raise ConvergenceError("Residual at the starting point is not finite", stage=stage)
    if n0 <= tol:
        return NewtonOutcome(x=x, residual=n0, iterations=0, steps=0, history=[n0])

    def newton(start: Vector, t: float) -> tuple[Vector, list[float]]:
        target = t * r0
        current = start
        history: list[float] = []
        with np.errstate(over="ignore", invalid="ignore"):
            for it in range(max_newton + 1):
                r = residual(current) - target
                nr = norm(r)
                history.append(nr)
                if not np.isfinite(nr):
                    raise _NewtonFailure(f"non-finite residual at iteration {it}")
                if nr <= tol:
                    return current, history
                if it == max_newton:
                    raise _NewtonFailure(f"no convergence in {max_newton} iterations")
                dx = solve(current, -r)
                if project is not None:
                    dx = project(dx)
                current = current + dx
                if not np.all(np.isfinite(current)):
                    raise _NewtonFailure(f"non-finite iterate at iteration {it + 1}")
                if monitor is not None:
                    monitor(current)
        raise _NewtonFailure("unreachable")

    nominal = 1.0 / steps
    step = nominal
    t = 1.0
    successes = 0
    accepted = 0
    iterations = 0
    history: list[float] = []

    while t > 0.0:
        step = min(step, t)
        t_next = t - step if t - step > 1e-14 else 0.0
        try:
            x_new, history = newton(x, t_next)
        except _NewtonFailure as e:
            successes = 0
            step /= 2.0
            logger.debug("continuation_step_halved", stage=stage, t=t, step=step, reason=str(e))
            if step < min_step:
                raise ConvergenceError(
                    "fiber continuation stalled",
                    stage=stage,
                    details={"t": t, "step": step, "reason": str(e)},
                )
            continue
        x = x_new
        t = t_next
        accepted += 1
        iterations += len(history) - 1
        successes += 1
        if successes >= 2 and step < nominal:
            step = min(2.0 * step, nominal)
            successes = 0

    return NewtonOutcome(
        x=x, residual=history[-1], iterations=iterations, steps=accepted, history=history
    )


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """A problem bound to one discretization.

    Attributes:
        spec: Problem specification
        system: Assembled FEM system
        basis: All computed eigenpairs (oriented)
        decomposition: Splitting for the index set of the spectral interval
        rhs: Dual vector g
        start: Primal starting point u0
    """

    spec: ProblemSpec
    system: FemSystem
    basis: EigenBasis
    decomposition: Decomposition
    rhs: Vector
    start: Vector

    @property
    def size(self) -> int:
        return self.system.size

    @property
    def labels(self) -> tuple[int, ...]:
        return self.decomposition.labels


@dataclass(frozen=True, eq=False)
class ExtendedJacobian:
    """L z = K z - Q_Y(A Q_X z) with A the f'(u)-weighted mass matrix."""

    stiffness: sp.csr_matrix
    weighted: sp.csr_matrix
    decomposition: Decomposition

    @property
    def shape(self) -> tuple[int, int]:
        n = int(self.stiffness.shape[0])
        return (n, n)

    def matvec(self, z: Vector) -> Vector:
        d = self.decomposition
        horizontal = d.project_X(z, "horizontal")
        return np.asarray(self.stiffness @ z - d.project_Y(self.weighted @ horizontal, "horizontal"))

    def rmatvec(self, z: Vector) -> Vector:
        d = self.decomposition
        # Q_Y^T z = z - Psi (M Psi)^T z
        qy_t = z - d.vectors @ (d.m_vectors.T @ z)
        a_qy = self.weighted @ qy_t
        # Q_X^T y = y - K Psi Lambda^-1 Psi^T y
        qx_t = a_qy - d.k_vectors @ ((d.vectors.T @ a_qy) / d.eigenvalues)
        return np.asarray(self.stiffness @ z - qx_t)

    def preconditioner(self) -> SpdFactorization:
        return self.decomposition.spd

    def to_dense(self) -> Vector:
        d = self.decomposition
        n = self.shape[0]
        eye = np.eye(n)
        q_x = eye - d.vectors @ (d.k_vectors.T / d.eigenvalues[:, None])
        q_y = eye - d.m_vectors @ d.vectors.T
        return np.asarray(self.stiffness.toarray() - q_y @ (self.weighted.toarray() @ q_x))


@dataclass(frozen=True, eq=False)
class FiberPoint:
    """Point of the fiber through g.

    Attributes:
        u: Interior nodal values
        heights: heights_X(u)
        residual_h: ||Q_Y(F(u) - g)||_Y
        residual_full: ||F(u) - g||_Y
        F_heights: heights_Y(F(u))
        newton_iterations: Newton iterations spent finding the point
        residual_history: Newton residuals of the final continuation step
    """

    u: Vector
    heights: Vector
    residual_h: float
    residual_full: float
    F_heights: Vector
    newton_iterations: int = 0
    residual_history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class FiberTrace:
    """Samples of a fiber along heights t * direction."""

    t: Vector
    direction: Vector
    points: list[FiberPoint]

    def __len__(self) -> int:
        return len(self.points)

    def reversed(self) -> FiberTrace:
        return FiberTrace(t=self.t[::-1].copy(), direction=self.direction, points=self.points[::-1])

    def concatenate(self, other: FiberTrace) -> FiberTrace:
        return FiberTrace(
            t=np.concatenate([self.t, other.t]),
            direction=self.direction,
            points=[*self.points, *other.points],
        )


class FiberTraceError(ConvergenceError):
    """Raised when the corrector fails partway through a trace."""

    def __init__(self, message: str, height: float, partial: FiberTrace) -> None:
        super().__init__(message, stage="trace", details={"height": height, "samples": len(partial)})
        self.height = height
        self.partial = partial


class FiberSolver:
    """Fiber operations of one discrete problem."""

    def __init__(self, problem: DiscreteProblem, dense: bool = False) -> None:
        """Initialize the solver.

        Args:
            problem: Discretized problem
            dense: Solve extended-Jacobian systems with the dense oracle
        """
        self.problem = problem
        self.dense = dense
        self.system = problem.system
        self.decomposition = problem.decomposition
        self.nonlinearity = problem.spec.nonlinearity
        self._rhs_norm = self.decomposition.y_norm(problem.rhs)

    @property
    def newton_tolerance(self) -> float:
        return max(1e-10, 1e-12 * self._rhs_norm)

    @property
    def tol_fiber(self) -> float:
        return self.problem.spec.tol_fiber

    def evaluate_F(self, u: Vector) -> Vector:
        """F(u) = K u - load(f(u_h))."""
        u = np.asarray(u, dtype=np.float64)
        return np.asarray(self.system.stiffness @ u - self.system.nonlinear_load(u, self.nonlinearity.f))

    def jacobian(self, u: Vector) -> ExtendedJacobian:
        weight = self.nonlinearity.f_prime(self.system.at_quadrature(u))
        return ExtendedJacobian(
            stiffness=self.system.stiffness,
            weighted=self.system.weighted_mass(weight),
            decomposition=self.decomposition,
        )

    def horizontal_residual(self, u: Vector) -> Vector:
        """Q_Y(F(u) - g)."""
        return self.decomposition.project_Y(self.evaluate_F(u) - self.problem.rhs, "horizontal")

    def residual(self, u: Vector, rhs: Vector | None = None) -> float:
        """||F(u) - g||_Y, against the problem RHS unless another is given."""
        g = self.problem.rhs if rhs is None else rhs
        return self.decomposition.y_norm(self.evaluate_F(u) - g)

    def fiber_point(
        self, u: Vector, iterations: int = 0, history: Sequence[float] = ()
    ) -> FiberPoint:
        """Evaluate the record of a point (without solving)."""
        d = self.decomposition
        F = self.evaluate_F(u)
        diff = F - self.problem.rhs
        return FiberPoint(
            u=u,
            heights=d.heights_X(u),
            residual_h=d.y_norm(d.project_Y(diff, "horizontal")),
            residual_full=d.y_norm(diff),
            F_heights=d.heights_Y(F),
            newton_iterations=iterations,
            residual_history=tuple(history),
        )

    def _check_height(self, v_height: Vector) -> Vector:
        v = np.atleast_1d(np.asarray(v_height, dtype=np.float64))
        if v.shape != (self.decomposition.dimension,):
            raise ConfigurationError(
                f"Height has {v.size} entries, index set has {self.decomposition.dimension}",
                config_key="direction",
            )
        return v

    def find_fiber_point(
        self,
        v_height: Vector,
        u0: Vector | None = None,
        monitor: Callable[[Vector], None] | None = None,
    ) -> FiberPoint:
        """Point of the fiber at height v, searched from u0 shifted to that height.

        Raises:
            ConvergenceError: If the continuation stalls or the result misses tol_fiber
            LinearSolverError: Propagated from the extended-Jacobian solves
        """
        d = self.decomposition
        v = self._check_height(v_height)
        start = self.problem.start if u0 is None else np.asarray(u0, dtype=np.float64)
        start = start + d.vertical_from_heights(v - d.heights_X(start))
        cont = self.problem.spec.config.continuation

        outcome = continuation_newton(
            residual=self.horizontal_residual,
            solve=lambda u, rhs: extended_jacobian_solve(self.jacobian(u), rhs, dense=self.dense),
            x0=start,
            norm=d.y_norm,
            tol=self.newton_tolerance,
            steps=cont.steps,
            max_newton=cont.max_newton,
            min_step=cont.min_step,
            project=lambda z: d.project_X(z, "horizontal"),
            monitor=monitor,
            stage="fiber_point",
        )
        u = outcome.x + d.vertical_from_heights(v - d.heights_X(outcome.x))
        point = self.fiber_point(u, outcome.iterations, outcome.history)
        if point.residual_h > self.tol_fiber:
            raise ConvergenceError(
                "Fiber point misses the fiber tolerance",
                stage="fiber_point",
                residual=point.residual_h,
            )
        logger.debug(
            "fiber_point_found",
            height=v.tolist(),
            iterations=outcome.iterations,
            steps=outcome.steps,
            residual_h=point.residual_h,
        )
        return point

    def trace_fiber(
        self,
        t_min: float,
        t_max: float,
        steps: int,
        direction: Sequence[float],
        start: Vector | None = None,
    ) -> FiberTrace:
        """Sample the fiber at heights t * direction for steps + 1 uniform t.

        Each sample is predicted by a vertical step from the previous one and
        corrected by :meth:`find_fiber_point`.

        Raises:
            FiberTraceError: With the partial trace when a corrector fails
        """
        dvec = self._check_height(direction)
        length = float(np.linalg.norm(dvec))
        if length == 0.0:
            raise ConfigurationError("Trace direction must be nonzero", config_key="direction")
        dvec = dvec / length
        if t_max < t_min:
            raise ConfigurationError("t_max must not be smaller than t_min", config_key="t_max")

        ts = np.array([t_min]) if steps == 0 or t_min == t_max else np.linspace(t_min, t_max, steps + 1)
        points: list[FiberPoint] = []
        u = start
        previous: float | None = None
        for t in ts:
            if previous is not None and u is not None:
                u = u + self.decomposition.vertical_from_heights((t - previous) * dvec)
            try:
                point = self.find_fiber_point(t * dvec, u)
            except (ConvergenceError, LinearSolverError) as e:
                partial = FiberTrace(t=ts[: len(points)], direction=dvec, points=points)
                logger.error("trace_aborted", height=float(t), samples=len(points), error=e.message)
                raise FiberTraceError(f"Corrector failed at t={float(t)!r}: {e.message}", float(t), partial)
            points.append(point)
            u = point.u
            previous = float(t)

        logger.info(
            "fiber_traced",
            samples=len(points),
            t_min=float(ts[0]),
            t_max=float(ts[-1]),
            max_residual_h=max(p.residual_h for p in points),
        )
        return FiberTrace(t=ts, direction=dvec, points=points)

    def lower_bound_estimate(self, points: Sequence[FiberPoint]) -> float:
        """Smallest singular value of the horizontal Jacobian block over the samples.

        The value is min ||L h||_Y / ||h||_X over horizontal h, estimated by
        inverse power iteration on the normal operator L^-1 K L^-T K. It is a
        diagnostic and returns 0 with a warning when the estimate fails.

        Raises:
            ConfigurationError: If no points are given
        """
        if not points:
            raise ConfigurationError("Lower-bound estimate needs at least one fiber point")
        best = np.inf
        for point in points:
            try:
                sigma = self._smallest_singular_value(point.u)
            except (LinearSolverError, ConvergenceError, FloatingPointError) as e:
                logger.warning("lower_bound_failed", error=str(e))
                return 0.0
            best = min(best, sigma)
        return float(best)

    def _smallest_singular_value(self, u: Vector) -> float:
        d = self.decomposition
        L = self.jacobian(u)
        K = self.system.stiffness
        rng = np.random.default_rng(0)
        h = d.project_X(rng.standard_normal(d.size), "horizontal")
        h = h / d.x_norm(h)
        sigma = np.inf
        for _ in range(LOWER_BOUND_ITERATIONS):
            z = extended_jacobian_solve(L, K @ h, dense=self.dense, transpose=True)
            h_next = extended_jacobian_solve(L, K @ z, dense=self.dense)
            h_next = d.project_X(h_next, "horizontal")
            norm = d.x_norm(h_next)
            if not np.isfinite(norm) or norm == 0.0:
                raise ConvergenceError("Inverse iteration collapsed", stage="lower_bound")
            h = h_next / norm
            estimate = d.y_norm(L.matvec(h))
            if abs(estimate - sigma) <= LOWER_BOUND_RTOL * estimate:
                return estimate
            sigma = estimate
        return float(sigma)
