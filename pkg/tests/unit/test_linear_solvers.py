"""Unit tests for linear solvers and eigenpairs."""

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from numpy.typing import NDArray
from structlog.testing import capture_logs

from fiberfem.core import ConfigurationError, ConvergenceError, LinearSolverError, settings
from fiberfem.engine.assembly import FemSystem
from fiberfem.engine.linear_solvers import (
    JacobianOperator,
    SpdFactorization,
    extended_jacobian_solve,
    rectangle_eigenvalues,
    smallest_eigenpairs,
    spd_solve,
)
from fiberfem.engine.mesh import Mesh


class ShiftedOperator:
    """K - c M plus a skew coupling, preconditioned by K."""

    def __init__(self, system: FemSystem, shift: float, skew: float) -> None:
        n = system.size
        coupling = sp.diags(np.full(n - 1, skew), 1)
        self.K = system.stiffness
        self.matrix = (system.stiffness - shift * system.mass + coupling - coupling.T).tocsr()
        self._pre = SpdFactorization(self.K)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def matvec(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.matrix @ z

    def rmatvec(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.matrix.T @ z

    def preconditioner(self) -> SpdFactorization:
        return self._pre

    def to_dense(self) -> NDArray[np.float64]:
        return self.matrix.toarray()


class TestSpdFactorization:
    """Tests for the SPD factorization."""

    def test_solves_stiffness(self, system_8x16: FemSystem) -> None:
        """Test the solve meets its residual bound."""
        rng = np.random.default_rng(1)
        b = rng.standard_normal(system_8x16.size)

        x = spd_solve(system_8x16.stiffness, b)

        assert np.linalg.norm(system_8x16.stiffness @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_rejects_asymmetric(self) -> None:
        """Test an asymmetric matrix is refused."""
        A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
        with pytest.raises(LinearSolverError):
            SpdFactorization(A)

    def test_rejects_negative_diagonal(self) -> None:
        """Test a non-positive diagonal is reported with its row."""
        A = sp.csr_matrix(np.diag([1.0, -1.0, 3.0]))
        with pytest.raises(LinearSolverError) as exc_info:
            SpdFactorization(A)
        assert exc_info.value.pivot == 1

    def test_rejects_indefinite(self, system_8x16: FemSystem) -> None:
        """Test K - 30 M (above the first eigenvalue) fails with a pivot."""
        A = system_8x16.stiffness - 30.0 * system_8x16.mass
        assert np.all(A.diagonal() > 0)
        with pytest.raises(LinearSolverError) as exc_info:
            SpdFactorization(A)
        assert exc_info.value.pivot is not None

    def test_empty_system(self) -> None:
        """Test a 0x0 system solves to an empty vector."""
        fact = SpdFactorization(sp.csr_matrix((0, 0)))
        assert fact.size == 0
        assert fact.solve(np.zeros(0)).shape == (0,)

    def test_zero_rhs(self, system_8x16: FemSystem) -> None:
        """Test a zero right-hand side gives the zero solution."""
        fact = SpdFactorization(system_8x16.stiffness)
        assert np.all(fact.solve(np.zeros(system_8x16.size)) == 0.0)

    def test_matches_dense_five_by_five(self) -> None:
        """Test the sparse solve of a tridiagonal 5x5 system agrees with a dense solve."""
        A = sp.diags([np.full(4, -1.0), np.full(5, 4.0), np.full(4, -1.0)], [-1, 0, 1]).tocsr()
        b = np.array([1.0, -2.0, 0.5, 3.0, -1.0])

        assert np.allclose(spd_solve(A, b), la.solve(A.toarray(), b), rtol=1e-12, atol=1e-14)

    def test_linear_in_rhs(self, system_8x16: FemSystem) -> None:
        """Test solving a combination of right-hand sides gives the combination of solutions."""
        rng = np.random.default_rng(11)
        b1, b2 = rng.standard_normal((2, system_8x16.size))
        K = system_8x16.stiffness

        combined = spd_solve(K, 2.5 * b1 - 0.75 * b2)
        expected = 2.5 * spd_solve(K, b1) - 0.75 * spd_solve(K, b2)

        assert np.linalg.norm(combined - expected) <= 1e-10 * np.linalg.norm(expected)

    def test_explicit_zero_tolerance_kept(self, system_8x16: FemSystem) -> None:
        """Test tol=0.0 is used as given rather than replaced by the default."""
        assert SpdFactorization(system_8x16.stiffness, tol=0.0).tol == 0.0


class TestSmallestEigenpairs:
    """Tests for the generalized eigensolver."""

    def test_matches_dense(self, system_8x16: FemSystem) -> None:
        """Test subspace iteration agrees with a dense solve of the same pencil."""
        K, M = system_8x16.stiffness, system_8x16.mass
        dense = la.eigh(K.toarray(), M.toarray(), eigvals_only=True)[:4]

        basis = smallest_eigenpairs(K, M, 4)

        assert basis.sweeps > 0
        assert np.allclose(basis.eigenvalues, dense, rtol=1e-9)

    def test_m_orthonormal(self, system_8x16: FemSystem) -> None:
        """Test eigenvectors are M-orthonormal with small residuals."""
        K, M = system_8x16.stiffness, system_8x16.mass
        basis = smallest_eigenpairs(K, M, 4)
        V = basis.eigenvectors

        assert np.allclose(V.T @ (M @ V), np.eye(4), atol=1e-9)
        assert basis.residuals.max() <= settings.eigen_tolerance
        assert np.all(np.diff(basis.eigenvalues) >= 0)

    def test_above_continuous_values(self, system_8x16: FemSystem) -> None:
        """Test conforming P1 eigenvalues bound the analytic ones from above."""
        basis = smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 3)
        exact = rectangle_eigenvalues(1.0, 2.0, 3)

        assert np.all(basis.eigenvalues >= exact)
        assert np.allclose(basis.eigenvalues, exact, rtol=0.1)

    def test_single_unknown(self, mesh_2x2: Mesh) -> None:
        """Test the 2x2 mesh has the single eigenvalue K/M = 20 by the dense path."""
        system = FemSystem.assemble(mesh_2x2)
        basis = smallest_eigenpairs(system.stiffness, system.mass, 1)

        assert basis.sweeps == 0
        assert basis.eigenvalues[0] == pytest.approx(20.0, rel=1e-12)
        assert abs(basis.eigenvectors[0, 0]) == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("k", [0, 106])
    def test_count_out_of_range(self, system_8x16: FemSystem, k: int) -> None:
        """Test k outside 1..n raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, k)

    def test_sweep_cap(self, system_8x16: FemSystem) -> None:
        """Test an unreachable tolerance reports ConvergenceError."""
        with pytest.raises(ConvergenceError) as exc_info:
            smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 4, tol=1e-30, max_sweeps=2)
        assert exc_info.value.stage == "eigen"

    def test_subset_keeps_columns(self, system_8x16: FemSystem) -> None:
        """Test subset picks eigenpairs by 0-based column."""
        basis = smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 4)
        part = basis.subset([1, 3])

        assert part.count == 2
        assert part.eigenvalues.tolist() == [basis.eigenvalues[1], basis.eigenvalues[3]]

    @pytest.mark.parametrize("n", [4, 20], ids=["dense", "subspace"])
    def test_warns_on_double_eigenvalue(self, n: int) -> None:
        """Test a repeated eigenvalue of a diagonal pencil is logged as a cluster."""
        values = np.concatenate([[1.0, 2.0, 2.0], np.arange(4.0, n + 1.0)])
        K = sp.diags(values).tocsr()
        M = sp.identity(n, format="csr")

        with capture_logs() as logs:
            basis = smallest_eigenpairs(K, M, 3)

        assert np.allclose(basis.eigenvalues, [1.0, 2.0, 2.0], rtol=1e-9)
        warnings = [log for log in logs if log["event"] == "clustered_eigenvalues"]
        assert warnings
        assert warnings[0]["labels"] == [2]

    def test_distinct_eigenvalues_not_clustered(self, system_8x16: FemSystem) -> None:
        """Test a simple spectrum logs no cluster warning."""
        with capture_logs() as logs:
            smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 3)
        assert not [log for log in logs if log["event"] == "clustered_eigenvalues"]

    def test_explicit_zero_tolerance_reaches_cap(self, system_8x16: FemSystem) -> None:
        """Test tol=0.0 is not replaced by the default, so the sweep cap is reached."""
        with pytest.raises(ConvergenceError):
            smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 4, tol=0.0, max_sweeps=20)


class TestRectangleEigenvalues:
    """Tests for the analytic rectangle spectrum."""

    def test_unit_by_two(self) -> None:
        """Test the first values of [0,1]x[0,2] are 5/4, 2 and 13/4 times pi^2."""
        values = rectangle_eigenvalues(1.0, 2.0, 3)
        assert np.allclose(values, np.pi**2 * np.array([1.25, 2.0, 3.25]))
        assert values[0] == pytest.approx(12.337005501361698)
        assert values[1] == pytest.approx(19.739208802178716)


class TestExtendedJacobianSolve:
    """Tests for solves with a nonsymmetric operator."""

    @pytest.fixture
    def operator(self, system_8x16: FemSystem) -> ShiftedOperator:
        """Nonsymmetric operator on the 8x16 mesh."""
        return ShiftedOperator(system_8x16, shift=5.0, skew=0.5)

    def test_protocol(self, operator: ShiftedOperator) -> None:
        """Test the test operator satisfies the protocol."""
        assert isinstance(operator, JacobianOperator)

    @pytest.mark.parametrize("transpose", [False, True])
    def test_gmres_matches_dense(self, operator: ShiftedOperator, transpose: bool) -> None:
        """Test the preconditioned GMRES solve agrees with a dense solve."""
        rng = np.random.default_rng(3)
        b = rng.standard_normal(operator.shape[0])
        A = operator.to_dense()

        A = A.T if transpose else A

        x = extended_jacobian_solve(operator, b, transpose=transpose)

        expected = la.solve(A, b)
        assert np.linalg.norm(A @ x - b) <= settings.krylov_tolerance * np.linalg.norm(b)
        assert np.linalg.norm(x - expected) <= 1e-5 * np.linalg.norm(expected)

    def test_dense_path(self, operator: ShiftedOperator) -> None:
        """Test the dense path returns the same solution."""
        b = np.ones(operator.shape[0])
        x = extended_jacobian_solve(operator, b, dense=True)
        assert np.linalg.norm(operator.matvec(x) - b) <= 1e-9 * np.linalg.norm(b)

    def test_dense_limit(self, operator: ShiftedOperator, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test the dense path refuses systems above the fallback limit."""
        monkeypatch.setattr(settings, "dense_fallback_limit", 10)
        with pytest.raises(LinearSolverError):
            extended_jacobian_solve(operator, np.ones(operator.shape[0]), dense=True)

    def test_zero_rhs(self, operator: ShiftedOperator) -> None:
        """Test a zero right-hand side returns zeros without iterating."""
        x = extended_jacobian_solve(operator, np.zeros(operator.shape[0]))
        assert np.all(x == 0.0)
