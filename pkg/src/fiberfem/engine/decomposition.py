"""Spectral splitting of the primal space X and the dual space Y.

Primal vectors are interior nodal values, dual vectors are load vectors. The
vertical subspaces are spanned by the eigenvectors whose eigenvalues lie in the
spectral interval; the horizontal subspaces are their complements, orthogonal
for the X inner product u^T K v and the Y inner product r^T K^-1 s.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..core import ConfigurationError, get_logger
from .linear_solvers import EigenBasis, SpdFactorization

logger = get_logger(__name__)

Part = Literal["vertical", "horizontal"]

SIGN_SUM_RTOL = 1e-8
SIGN_ENTRY_RTOL = 1e-6


def index_set(eigenvalues: NDArray[np.float64], interval: tuple[float, float]) -> list[int]:
    """1-based labels j with a~ <= lambda_j <= b~ (closed interval).

    Raises:
        ConfigurationError: If the interval is reversed
    """
    lower, upper = interval
    if lower > upper:
        raise ConfigurationError("interval must satisfy a~ <= b~", config_key="interval")
    values = np.asarray(eigenvalues)
    labels = [int(j) + 1 for j in np.flatnonzero((values >= lower) & (values <= upper))]
    if not labels:
        logger.warning("empty_index_set", interval=list(interval))
    return labels


def ensure_complete(eigenvalues: NDArray[np.float64], interval: tuple[float, float]) -> None:
    """Require an eigenvalue above the interval so no in-interval eigenvalue is missing.

    Raises:
        ConfigurationError: If the largest computed eigenvalue is not above b~
    """
    values = np.asarray(eigenvalues)
    if values.size == 0 or values[-1] <= interval[1]:
        raise ConfigurationError(
            f"Computed spectrum ends at {float(values[-1]) if values.size else float('nan')!r}, "
            f"inside the interval up to {interval[1]!r}; increase k",
            config_key="k",
        )


def orient_eigenvectors(basis: EigenBasis, mass: sp.spmatrix) -> EigenBasis:
    """Fix the sign of every eigenvector deterministically.

    The sum of M psi_j is made positive; when that sum is negligible the first
    significant entry of psi_j is made positive instead.
    """
    vectors = np.array(basis.eigenvectors, dtype=np.float64, copy=True)
    for j in range(vectors.shape[1]):
        psi = vectors[:, j]
        weighted = mass @ psi
        total = float(weighted.sum())
        if abs(total) > SIGN_SUM_RTOL * float(np.abs(weighted).sum()):
            sign = np.sign(total)
        else:
            peak = float(np.abs(psi).max())
            first = int(np.flatnonzero(np.abs(psi) > SIGN_ENTRY_RTOL * peak)[0])
            sign = np.sign(psi[first])
        vectors[:, j] = sign * psi
    return basis.with_vectors(vectors)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Vertical/horizontal splitting for a fixed index set J.

    Attributes:
        labels: 1-based eigen labels in J
        eigenvalues: lambda_j for j in J
        vectors: Psi, the (n, |J|) eigenvectors of J
        k_vectors: K Psi
        m_vectors: M Psi
        stiffness: Interior stiffness matrix K
        mass: Interior mass matrix M
        spd: Factorization of K (Y inner products, preconditioning)
    """

    labels: tuple[int, ...]
    eigenvalues: NDArray[np.float64]
    vectors: NDArray[np.float64]
    k_vectors: NDArray[np.float64]
    m_vectors: NDArray[np.float64]
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    spd: SpdFactorization

    @classmethod
    def build(
        cls,
        basis: EigenBasis,
        labels: list[int],
        stiffness: sp.csr_matrix,
        mass: sp.csr_matrix,
        spd: SpdFactorization | None = None,
    ) -> Decomposition:
        """Restrict an oriented eigenbasis to the labels of J."""
        if any(j < 1 or j > basis.count for j in labels):
            raise ConfigurationError(
                f"Index set {labels} exceeds the {basis.count} computed eigenpairs",
                config_key="k",
            )
        sub = basis.subset([j - 1 for j in labels])
        vectors = np.ascontiguousarray(sub.eigenvectors)
        return cls(
            labels=tuple(labels),
            eigenvalues=np.asarray(sub.eigenvalues, dtype=np.float64),
            vectors=vectors,
            k_vectors=np.asarray(stiffness @ vectors),
            m_vectors=np.asarray(mass @ vectors),
            stiffness=stiffness,
            mass=mass,
            spd=spd or SpdFactorization(stiffness),
        )

    @property
    def dimension(self) -> int:
        """|J|."""
        return len(self.labels)

    @property
    def size(self) -> int:
        """Interior unknowns."""
        return int(self.stiffness.shape[0])

    @property
    def sqrt_eigenvalues(self) -> NDArray[np.float64]:
        return np.sqrt(self.eigenvalues)

    def project_X(self, u: NDArray[np.float64], which: Part) -> NDArray[np.float64]:
        """P_X u = Psi Lambda^-1 Psi^T K u, or its complement."""
        u = np.asarray(u, dtype=np.float64)
        vertical = self.vectors @ ((self.k_vectors.T @ u) / self.eigenvalues)
        return vertical if which == "vertical" else u - vertical

    def project_Y(self, r: NDArray[np.float64], which: Part) -> NDArray[np.float64]:
        """P_Y r = M Psi Psi^T r, or its complement."""
        r = np.asarray(r, dtype=np.float64)
        vertical = self.m_vectors @ (self.vectors.T @ r)
        return vertical if which == "vertical" else r - vertical

    def heights_X(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        """Coordinates of P_X u in the X-orthonormal basis psi_j / sqrt(lambda_j)."""
        return np.asarray((self.k_vectors.T @ np.asarray(u)) / self.sqrt_eigenvalues)

    def heights_Y(self, r: NDArray[np.float64]) -> NDArray[np.float64]:
        """Coordinates of P_Y r in the Y-orthonormal basis sqrt(lambda_j) M psi_j."""
        return np.asarray((self.vectors.T @ np.asarray(r)) / self.sqrt_eigenvalues)

    def vertical_from_heights(self, heights: NDArray[np.float64]) -> NDArray[np.float64]:
        """Sum_j v_j psi_j / sqrt(lambda_j)."""
        return np.asarray(self.vectors @ (np.asarray(heights) / self.sqrt_eigenvalues))

    def dual_from_heights(self, heights: NDArray[np.float64]) -> NDArray[np.float64]:
        """Sum_j z_j sqrt(lambda_j) M psi_j."""
        return np.asarray(self.m_vectors @ (np.asarray(heights) * self.sqrt_eigenvalues))

    def phi_X(self, label: int) -> NDArray[np.float64]:
        """X-normalized basis vector of a label in J."""
        j = self.labels.index(label)
        return self.vectors[:, j] / self.sqrt_eigenvalues[j]

    def phi_Y(self, label: int) -> NDArray[np.float64]:
        """Y-normalized basis vector of a label in J."""
        j = self.labels.index(label)
        return self.m_vectors[:, j] * self.sqrt_eigenvalues[j]

    def x_inner(self, u: NDArray[np.float64], v: NDArray[np.float64]) -> float:
        return float(np.asarray(u) @ (self.stiffness @ np.asarray(v)))

    def x_norm(self, u: NDArray[np.float64]) -> float:
        return float(np.sqrt(max(self.x_inner(u, u), 0.0)))

    def y_inner(self, r: NDArray[np.float64], s: NDArray[np.float64]) -> float:
        return float(np.asarray(r) @ self.spd.solve(np.asarray(s)))

    def y_norm(self, r: NDArray[np.float64]) -> float:
        return float(np.sqrt(max(self.y_inner(r, r), 0.0)))
