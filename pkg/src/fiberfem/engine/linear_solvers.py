"""Sparse linear algebra: SPD solves, generalized eigenpairs, extended-Jacobian solves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse import linalg as spla

from ..core import ConfigurationError, ConvergenceError, LinearSolverError, get_logger, settings

logger = get_logger(__name__)

CLUSTER_GAP = 1e-6
SYMMETRY_RTOL = 1e-12


class SpdFactorization:
    """Reusable factorization of a sparse symmetric positive-definite matrix.

    SuperLU runs in symmetric mode without row pivoting, so the diagonal of U
    is the pivot sequence of an LDL^T factorization; a non-positive pivot means
    the matrix is not positive definite.
    """

    def __init__(self, matrix: sp.spmatrix, tol: float | None = None) -> None:
        """Factorize the matrix.

        Args:
            matrix: Sparse SPD matrix
            tol: Relative residual bound for solves (default from settings)

        Raises:
            LinearSolverError: If the matrix is not symmetric or has a non-positive pivot
        """
        self.matrix = sp.csc_matrix(matrix)
        self.tol = tol if tol is not None else settings.spd_tolerance
        n = self.matrix.shape[0]
        self._lu: spla.SuperLU | None = None
        if self.matrix.shape != (n, n):
            raise LinearSolverError("SPD factorization needs a square matrix")
        if n == 0:
            return

        scale = abs(self.matrix).max()
        asym = abs(self.matrix - self.matrix.T).max() if self.matrix.nnz else 0.0
        if asym > SYMMETRY_RTOL * scale:
            raise LinearSolverError(
                "Matrix is not symmetric",
                details={"asymmetry": float(asym), "scale": float(scale)},
            )
        diagonal = self.matrix.diagonal()
        bad = np.flatnonzero(diagonal <= 0)
        if bad.size:
            raise LinearSolverError(
                f"Non-positive diagonal entry at row {int(bad[0])}",
                pivot=int(bad[0]),
            )

        try:
            self._lu = spla.splu(
                self.matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as e:
            raise LinearSolverError(f"Factorization failed: {e!s}")

        pivots = self._lu.U.diagonal()
        bad = np.flatnonzero(pivots <= 0)
        if bad.size:
            raise LinearSolverError(
                f"Matrix is not positive definite: pivot {int(bad[0])} is {float(pivots[bad[0]])!r}",
                pivot=int(bad[0]),
            )

    @property
    def size(self) -> int:
        """Matrix dimension."""
        return int(self.matrix.shape[0])

    def apply_inverse(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Unchecked triangular solves (used as a preconditioner)."""
        rhs = np.asarray(rhs, dtype=np.float64)
        if self._lu is None:
            return np.zeros_like(rhs)
        return np.asarray(self._lu.solve(rhs))

    def solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Solve with the residual checked against the tolerance.

        One step of iterative refinement is taken when the first solve misses
        the tolerance.

        Raises:
            LinearSolverError: If the refined residual still misses the tolerance
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        if self._lu is None:
            return np.zeros_like(rhs)
        b_norm = float(np.linalg.norm(rhs))
        if b_norm == 0.0:
            return np.zeros_like(rhs)

        x = self.apply_inverse(rhs)
        residual = rhs - self.matrix @ x
        rel = float(np.linalg.norm(residual)) / b_norm
        if rel > self.tol:
            x = x + self.apply_inverse(residual)
            rel = float(np.linalg.norm(rhs - self.matrix @ x)) / b_norm
            if rel > self.tol:
                raise LinearSolverError(
                    "SPD solve missed its tolerance after refinement",
                    iterations=2,
                    residual=rel,
                )
        return x


def spd_solve(
    matrix: sp.spmatrix, rhs: NDArray[np.float64], tol: float | None = None
) -> NDArray[np.float64]:
    """Solve a sparse SPD system (factorize, solve, check the residual)."""
    return SpdFactorization(matrix, tol=tol).solve(rhs)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Smallest generalized eigenpairs of (K, M).

    Attributes:
        eigenvalues: Nondecreasing eigenvalues lambda_1..lambda_k
        eigenvectors: (n, k) M-orthonormal eigenvectors as columns
        residuals: ||K psi_j - lambda_j M psi_j|| / ||K psi_j||
        sweeps: Subspace iteration sweeps used (0 for the dense path)
    """

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    residuals: NDArray[np.float64]
    sweeps: int = 0

    @property
    def count(self) -> int:
        """Number of eigenpairs."""
        return int(self.eigenvalues.shape[0])

    def subset(self, columns: list[int]) -> EigenBasis:
        """Basis restricted to 0-based columns."""
        return EigenBasis(
            eigenvalues=self.eigenvalues[columns],
            eigenvectors=self.eigenvectors[:, columns],
            residuals=self.residuals[columns],
            sweeps=self.sweeps,
        )

    def with_vectors(self, vectors: NDArray[np.float64]) -> EigenBasis:
        """Same eigenvalues with replacement vectors (e.g. sign-normalized)."""
        return EigenBasis(self.eigenvalues, vectors, self.residuals, self.sweeps)


def _residuals(
    K: sp.spmatrix, M: sp.spmatrix, values: NDArray[np.float64], vectors: NDArray[np.float64]
) -> NDArray[np.float64]:
    KX = K @ vectors
    MX = M @ vectors
    norms = np.linalg.norm(KX, axis=0)
    norms[norms == 0] = 1.0
    return np.asarray(np.linalg.norm(KX - MX * values[None, :], axis=0) / norms)


def smallest_eigenpairs(
    K: sp.spmatrix,
    M: sp.spmatrix,
    k: int,
    factorization: SpdFactorization | None = None,
    tol: float | None = None,
    max_sweeps: int | None = None,
    seed: int = 0,
) -> EigenBasis:
    """k smallest eigenpairs of K psi = lambda M psi.

    Shift-invert subspace iteration with shift 0: each sweep applies K^-1 M to a
    block of k + 3 vectors, orthonormalizes it and performs a Rayleigh-Ritz
    projection. Systems small enough to be covered by the block are solved
    densely.

    Args:
        K: Sparse SPD stiffness matrix
        M: Sparse SPD mass matrix
        k: Number of eigenpairs
        factorization: Existing factorization of K
        tol: Target relative eigen-residual (default from settings)
        max_sweeps: Sweep cap (default from settings)
        seed: Seed of the deterministic starting block

    Raises:
        ConfigurationError: If k is not in 1..n
        ConvergenceError: If the sweep cap is reached
    """
    n = int(K.shape[0])
    if not 1 <= k <= n:
        raise ConfigurationError(
            f"Eigen count k={k} must lie in 1..{n} (interior unknowns)",
            config_key="k",
        )
    tol = tol if tol is not None else settings.eigen_tolerance
    max_sweeps = max_sweeps if max_sweeps is not None else settings.eigen_max_sweeps
    block = min(k + 3, n)

    if block == n:
        values, vectors = la.eigh(K.toarray(), M.toarray())
        values, vectors = values[:k], vectors[:, :k]
        basis = EigenBasis(values, vectors, _residuals(K, M, values, vectors), sweeps=0)
        _warn_clusters(basis)
        return basis

    fact = factorization or SpdFactorization(K)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    residuals = np.full(k, np.inf)

    for sweep in range(1, max_sweeps + 1):
        Y = fact.apply_inverse(np.asarray(M @ X))
        Q, _ = np.linalg.qr(Y)
        Kr = Q.T @ (K @ Q)
        Mr = Q.T @ (M @ Q)
        theta, C = la.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
        X = Q @ C
        values, vectors = theta[:k], X[:, :k]
        residuals = _residuals(K, M, values, vectors)
        if residuals.max() <= tol:
            basis = EigenBasis(values.copy(), np.ascontiguousarray(vectors), residuals, sweeps=sweep)
            logger.info(
                "eigen_converged",
                k=k,
                sweeps=sweep,
                lambda_1=float(values[0]),
                max_residual=float(residuals.max()),
            )
            _warn_clusters(basis)
            return basis

    raise ConvergenceError(
        f"Subspace iteration did not converge in {max_sweeps} sweeps",
        stage="eigen",
        residual=float(residuals.max()),
    )


def _warn_clusters(basis: EigenBasis) -> None:
    values = basis.eigenvalues
    if values.size < 2:
        return
    gaps = np.diff(values) / np.maximum(np.abs(values[:-1]), np.finfo(float).tiny)
    clustered = np.flatnonzero(gaps < CLUSTER_GAP)
    if clustered.size:
        logger.warning(
            "clustered_eigenvalues",
            labels=[int(j) + 1 for j in clustered],
            gaps=[float(gaps[j]) for j in clustered],
        )


def rectangle_eigenvalues(width: float, height: float, count: int) -> NDArray[np.float64]:
    """Analytic Dirichlet eigenvalues pi^2 (m^2/w^2 + n^2/h^2) of a rectangle, ascending."""
    modes = np.arange(1, count + 1)
    m, n = np.meshgrid(modes, modes)
    values = np.pi**2 * (m.ravel() ** 2 / width**2 + n.ravel() ** 2 / height**2)
    return np.sort(values)[:count]


@runtime_checkable
class JacobianOperator(Protocol):
    """Linear operator solved in every Newton step of the fiber search."""

    @property
    def shape(self) -> tuple[int, int]:
        """Operator shape."""
        ...

    def matvec(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Apply the operator."""
        ...

    def rmatvec(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Apply the transpose."""
        ...

    def preconditioner(self) -> SpdFactorization:
        """SPD factorization used as preconditioner."""
        ...

    def to_dense(self) -> NDArray[np.float64]:
        """Dense matrix of the operator."""
        ...


def extended_jacobian_solve(
    L: JacobianOperator,
    rhs: NDArray[np.float64],
    tol: float | None = None,
    dense: bool = False,
    transpose: bool = False,
) -> NDArray[np.float64]:
    """Solve L x = rhs (or L^T x = rhs).

    The operator is applied matrix-free inside restarted GMRES preconditioned
    by the factorization of K. ``dense=True`` assembles the operator and uses a
    dense LU (only for small systems).

    Raises:
        LinearSolverError: If the relative residual misses the tolerance
    """
    tol = tol if tol is not None else settings.krylov_tolerance
    b = np.asarray(rhs, dtype=np.float64)
    n = int(L.shape[0])
    if n == 0:
        return np.zeros(0)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)

    apply = L.rmatvec if transpose else L.matvec

    if dense:
        if n > settings.dense_fallback_limit:
            raise LinearSolverError(
                f"Dense fallback limited to {settings.dense_fallback_limit} unknowns",
                details={"size": n},
            )
        A = L.to_dense()
        x = la.solve(A.T if transpose else A, b)
        rel = float(np.linalg.norm(apply(x) - b)) / b_norm
        if rel > tol:
            raise LinearSolverError("Dense extended-Jacobian solve is ill-conditioned", residual=rel)
        return np.asarray(x)

    operator = spla.LinearOperator((n, n), matvec=apply, dtype=np.float64)
    pre = L.preconditioner()
    precond = spla.LinearOperator((n, n), matvec=pre.apply_inverse, dtype=np.float64)
    restart = min(settings.krylov_restart, n)
    maxiter = max(1, math.ceil(10 * n / restart))

    iterations = 0

    def count(_: object) -> None:
        nonlocal iterations
        iterations += 1

    x = np.zeros(n)
    rel = 1.0
    for _ in range(3):
        residual = b - apply(x)
        rel = float(np.linalg.norm(residual)) / b_norm
        if rel <= tol:
            return x
        correction, info = spla.gmres(
            operator,
            residual,
            M=precond,
            rtol=tol,
            atol=0.0,
            restart=restart,
            maxiter=maxiter,
            callback=count,
            callback_type="pr_norm",
        )
        if info < 0:
            raise LinearSolverError("GMRES breakdown", iterations=iterations, residual=rel)
        x = x + correction

    rel = float(np.linalg.norm(b - apply(x))) / b_norm
    if rel > tol:
        raise LinearSolverError(
            "Extended-Jacobian solve hit the iteration limit",
            iterations=iterations,
            residual=rel,
        )
    return x
