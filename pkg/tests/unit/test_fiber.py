"""Unit tests for the fiber search and trace."""

from collections.abc import Callable

import numpy as np
import pytest
import scipy.linalg as la

from fiberfem.core import ConfigurationError, ConvergenceError
from fiberfem.engine.fiber import FiberSolver, FiberTraceError, continuation_newton
from fiberfem.engine.linear_solvers import extended_jacobian_solve
from fiberfem.engine.problems import ProblemRegistry, ProblemSpec
from fiberfem.services import FiberPipeline


def _arctan_residual(x: np.ndarray) -> np.ndarray:
    return np.arctan(x)


def _arctan_solve(x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return rhs * (1.0 + x * x)


def _max_norm(r: np.ndarray) -> float:
    return float(np.abs(r).max())


@pytest.fixture(scope="module")
def linear_solver(pipeline: FiberPipeline, linear_small: ProblemSpec) -> FiberSolver:
    """Solver of f(u) = 16 u on the 8x16 mesh."""
    return pipeline.solver(linear_small)


@pytest.fixture(scope="module")
def example1_solver(pipeline: FiberPipeline, example1_small: ProblemSpec) -> FiberSolver:
    """Solver of Example 1 on the 8x16 mesh."""
    return pipeline.solver(example1_small)


class TestContinuationNewton:
    """Tests for the homotopy Newton driver on scalar problems."""

    def test_plain_newton_diverges_on_arctan(self) -> None:
        """Test a single full step from x = 2 stalls: undamped Newton on arctan diverges."""
        with pytest.raises(ConvergenceError) as exc_info:
            continuation_newton(
                _arctan_residual, _arctan_solve, np.array([2.0]), _max_norm, tol=1e-12, steps=1, min_step=1.0
            )
        assert "fiber continuation stalled" in exc_info.value.message

    def test_continuation_converges_on_arctan(self) -> None:
        """Test ten homotopy steps reach the root of arctan from x = 2."""
        outcome = continuation_newton(
            _arctan_residual, _arctan_solve, np.array([2.0]), _max_norm, tol=1e-12, steps=10
        )
        assert abs(outcome.x[0]) <= 1e-12
        assert outcome.steps >= 10
        assert outcome.residual <= 1e-12

    def test_far_start_recovers_by_halving(self) -> None:
        """Test step halving rescues a start where one full step fails."""
        outcome = continuation_newton(
            _arctan_residual, _arctan_solve, np.array([2.0]), _max_norm, tol=1e-12, steps=1
        )
        assert abs(outcome.x[0]) <= 1e-12
        assert outcome.steps > 1

    def test_converged_start_unchanged(self) -> None:
        """Test a start already within tolerance is returned without iterating."""
        outcome = continuation_newton(
            _arctan_residual, _arctan_solve, np.array([0.0]), _max_norm, tol=1e-12
        )
        assert outcome.x.tolist() == [0.0]
        assert outcome.iterations == 0
        assert outcome.steps == 0

    def test_non_finite_start(self) -> None:
        """Test a non-finite residual at the start raises ConvergenceError."""
        with pytest.raises(ConvergenceError):
            continuation_newton(
                lambda x: x * np.nan, _arctan_solve, np.array([1.0]), _max_norm, tol=1e-12
            )

    def test_monitor_sees_every_iterate(self) -> None:
        """Test the monitor is called once per Newton update."""
        seen: list[float] = []
        outcome = continuation_newton(
            _arctan_residual,
            _arctan_solve,
            np.array([0.5]),
            _max_norm,
            tol=1e-12,
            steps=2,
            monitor=lambda x: seen.append(float(x[0])),
        )
        assert len(seen) >= outcome.iterations
        assert seen[-1] == outcome.x[0]


class TestExtendedJacobian:
    """Operator algebra of the extended Jacobian for constant f'."""

    def test_eigen_action(self, linear_solver: FiberSolver) -> None:
        """Test L psi_j = lambda_j M psi_j on J and (lambda_k - c) M psi_k off J."""
        problem = linear_solver.problem
        L = linear_solver.jacobian(np.zeros(problem.size))
        M = problem.system.mass
        for j, lam in enumerate(problem.basis.eigenvalues):
            psi = problem.basis.eigenvectors[:, j]
            factor = lam if (j + 1) in problem.labels else lam - 16.0
            expected = factor * (M @ psi)
            assert np.linalg.norm(L.matvec(psi) - expected) <= 1e-8 * np.linalg.norm(expected)

    def test_dense_and_transpose_agree(self, example1_solver: FiberSolver) -> None:
        """Test matvec and rmatvec match the assembled operator and its transpose."""
        n = example1_solver.problem.size
        rng = np.random.default_rng(11)
        L = example1_solver.jacobian(rng.standard_normal(n))
        A = L.to_dense()
        z = rng.standard_normal(n)

        assert np.allclose(L.matvec(z), A @ z, rtol=1e-12, atol=1e-10)
        assert np.allclose(L.rmatvec(z), A.T @ z, rtol=1e-12, atol=1e-10)

    def test_solve_on_eigenvectors(self, linear_solver: FiberSolver) -> None:
        """Test L^-1 M psi_j is psi_j / lambda_j on J and psi_k / (lambda_k - c) off J."""
        problem = linear_solver.problem
        L = linear_solver.jacobian(np.zeros(problem.size))
        M = problem.system.mass
        for j, lam in enumerate(problem.basis.eigenvalues):
            psi = problem.basis.eigenvectors[:, j]
            factor = lam if (j + 1) in problem.labels else lam - 16.0
            x = extended_jacobian_solve(L, M @ psi)
            assert np.linalg.norm(x - psi / factor) <= 1e-6 * np.linalg.norm(psi / factor)


class TestEvaluateF:
    """Tests for the discrete operator F."""

    def test_zero_maps_to_zero(self, pipeline: FiberPipeline, example3_small: ProblemSpec) -> None:
        """Test F(0) = 0 when f(0) = 0."""
        solver = pipeline.solver(example3_small)
        assert np.all(solver.evaluate_F(np.zeros(solver.problem.size)) == 0.0)

    def test_linear_operator(self, linear_solver: FiberSolver) -> None:
        """Test F(u) = (K - c M) u for f(u) = c u."""
        system = linear_solver.system
        u = np.random.default_rng(2).standard_normal(system.size)
        expected = system.stiffness @ u - 16.0 * (system.mass @ u)
        assert np.allclose(linear_solver.evaluate_F(u), expected, rtol=1e-12, atol=1e-12)


class TestFindFiberPoint:
    """Tests for single fiber points."""

    def test_example1_at_zero_height(self, example1_solver: FiberSolver) -> None:
        """Test the fiber point at height 0 from u0 = 0 meets tol_fiber."""
        point = example1_solver.find_fiber_point(np.array([0.0]))

        assert point.residual_h <= 1e-8
        assert abs(point.heights[0]) <= 1e-12
        assert point.newton_iterations > 0

    def test_point_on_fiber_unchanged(self, example1_solver: FiberSolver) -> None:
        """Test starting from a fiber point returns it with no real work."""
        point = example1_solver.find_fiber_point(np.array([3.0]))
        again = example1_solver.find_fiber_point(point.heights, point.u)

        assert again.newton_iterations <= 1
        assert np.allclose(again.u, point.u, atol=1e-10)

    def test_horizontal_confinement(self, example1_solver: FiberSolver) -> None:
        """Test every Newton iterate keeps the requested height."""
        d = example1_solver.decomposition
        drift: list[float] = []
        example1_solver.find_fiber_point(
            np.array([12.0]), monitor=lambda u: drift.append(float(abs(d.heights_X(u)[0] - 12.0)))
        )
        assert drift
        assert max(drift) <= 1e-10

    def test_uniqueness_across_starts(self, example1_solver: FiberSolver) -> None:
        """Test five different starts on the same horizontal slice reach one point."""
        problem = example1_solver.problem
        rng = np.random.default_rng(5)
        starts = [np.zeros(problem.size)]
        starts += [scale * rng.standard_normal(problem.size) for scale in (0.5, 1.0, 2.0)]
        starts.append(10.0 * problem.basis.eigenvectors[:, 2])
        points = [example1_solver.find_fiber_point(np.array([5.0]), u0) for u0 in starts]

        d = example1_solver.decomposition
        for other in points[1:]:
            assert d.x_norm(other.u - points[0].u) <= 1e-6

    def test_linear_matches_dense_oracle(self, linear_solver: FiberSolver) -> None:
        """Test the fiber point of the linear problem solves Q (K - cM) w = Q (g - (K - cM) v)."""
        problem = linear_solver.problem
        d = problem.decomposition
        height = np.array([7.0])
        vertical = d.vertical_from_heights(height)
        L = linear_solver.jacobian(np.zeros(problem.size))
        shifted = problem.system.stiffness - 16.0 * problem.system.mass
        rhs = d.project_Y(problem.rhs - shifted @ vertical, "horizontal")
        w = la.solve(L.to_dense(), rhs)

        point = linear_solver.find_fiber_point(height)

        assert d.x_norm(point.u - (vertical + w)) <= 1e-8

    def test_wrong_height_size(self, example1_solver: FiberSolver) -> None:
        """Test a height with the wrong number of entries is rejected."""
        with pytest.raises(ConfigurationError):
            example1_solver.find_fiber_point(np.array([1.0, 2.0]))

    @pytest.mark.parametrize("height", [0.0, 10.0, 40.0])
    def test_final_newton_step_contracts_quadratically(
        self, registry: ProblemRegistry, coarse: Callable[..., ProblemSpec], height: float
    ) -> None:
        """Test the last three Newton residuals have log-log slope of at least 1.7."""
        spec = coarse(registry.get("example1"), continuation={"steps": 1, "max_newton": 25})
        solver = FiberSolver(FiberPipeline(dense=True).discretize(spec), dense=True)

        point = solver.find_fiber_point(np.array([height]))

        history = point.residual_history
        assert len(history) >= 3
        r0, r1, r2 = history[-3:]
        slope = np.log(r2 / r1) / np.log(r1 / r0)
        assert slope >= 1.7


class TestTraceFiber:
    """Tests for the predictor-corrector trace."""

    def test_samples_on_fiber(self, example1_solver: FiberSolver) -> None:
        """Test every sample sits at its height and meets tol_fiber."""
        trace = example1_solver.trace_fiber(-20.0, 20.0, 8, [1.0])

        assert len(trace) == 9
        assert np.all(np.diff(trace.t) > 0)
        for t, point in zip(trace.t, trace.points, strict=True):
            assert point.heights[0] == pytest.approx(t, abs=1e-10)
            assert point.residual_h <= 1e-8

    def test_linear_fiber_map_is_affine(self, linear_solver: FiberSolver) -> None:
        """Test the image heights of the linear problem lie on a line of slope (lambda_1 - c)/lambda_1."""
        trace = linear_solver.trace_fiber(-40.0, 40.0, 8, [1.0])
        b = np.array([p.F_heights[0] for p in trace.points])
        slope, intercept = np.polyfit(trace.t, b, 1)
        lam = linear_solver.decomposition.eigenvalues[0]

        assert np.abs(b - (slope * trace.t + intercept)).max() <= 1e-8
        assert slope == pytest.approx((lam - 16.0) / lam, rel=1e-8)

    def test_zero_length_window(self, example1_solver: FiberSolver) -> None:
        """Test t_min = t_max gives the single fiber point at that height."""
        trace = example1_solver.trace_fiber(4.0, 4.0, 10, [1.0])
        point = example1_solver.find_fiber_point(np.array([4.0]))

        assert len(trace) == 1
        assert np.allclose(trace.points[0].u, point.u, atol=1e-10)

    def test_direction_normalized(self, pipeline: FiberPipeline, example3_small: ProblemSpec) -> None:
        """Test a two-dimensional direction is scaled to unit length."""
        solver = pipeline.solver(example3_small)
        trace = solver.trace_fiber(0.0, 2.0, 1, [3.0, 4.0])

        assert np.allclose(trace.direction, [0.6, 0.8])
        assert np.allclose(trace.points[-1].heights, [1.2, 1.6], atol=1e-10)

    def test_zero_direction(self, example1_solver: FiberSolver) -> None:
        """Test a zero direction is rejected."""
        with pytest.raises(ConfigurationError):
            example1_solver.trace_fiber(0.0, 1.0, 2, [0.0])

    def test_reverse_and_concatenate(self, example1_solver: FiberSolver) -> None:
        """Test trace reversal and concatenation keep samples paired with heights."""
        trace = example1_solver.trace_fiber(0.0, 6.0, 3, [1.0])
        both = trace.concatenate(trace.reversed())

        assert len(both) == 8
        assert both.t.tolist() == [0.0, 2.0, 4.0, 6.0, 6.0, 4.0, 2.0, 0.0]
        assert both.points[-1] is trace.points[0]

    def test_failure_keeps_partial_trace(
        self, pipeline: FiberPipeline, example1_small: ProblemSpec
    ) -> None:
        """Test a corrector failure reports the failing height and the samples so far."""
        spec = example1_small.with_updates(continuation={"steps": 1, "max_newton": 1, "min_step": 0.9})
        solver = pipeline.solver(spec)

        with pytest.raises(FiberTraceError) as exc_info:
            solver.trace_fiber(-10.0, 10.0, 4, [1.0])

        assert exc_info.value.height == -10.0
        assert len(exc_info.value.partial) == 0
        assert exc_info.value.stage == "trace"


class TestLowerBound:
    """Tests for the lower-bound diagnostic."""

    def test_linear_matches_spectrum(self, linear_solver: FiberSolver) -> None:
        """Test the bound equals min |lambda_k - c| / lambda_k over k outside J."""
        problem = linear_solver.problem
        point = linear_solver.find_fiber_point(np.array([0.0]))
        outside = [lam for j, lam in enumerate(problem.basis.eigenvalues) if (j + 1) not in problem.labels]
        expected = min(abs(lam - 16.0) / lam for lam in outside)

        assert linear_solver.lower_bound_estimate([point]) == pytest.approx(expected, rel=1e-5)

    def test_positive_along_example1(self, example1_solver: FiberSolver) -> None:
        """Test the bound stays positive along an Example 1 trace."""
        trace = example1_solver.trace_fiber(-20.0, 20.0, 4, [1.0])
        assert example1_solver.lower_bound_estimate(trace.points) > 0.0

    def test_empty_points(self, example1_solver: FiberSolver) -> None:
        """Test an empty sample list is an error."""
        with pytest.raises(ConfigurationError):
            example1_solver.lower_bound_estimate([])
