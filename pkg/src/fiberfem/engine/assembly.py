"""P1 finite element assembly on triangle meshes.

All integrals use the 3-point Gauss rule on triangles (exact for quadratic
polynomials, hence for products of two P1 functions). Dirichlet conditions are
imposed by elimination: matrices and vectors are restricted to interior nodes
unless ``full=True`` is requested.
"""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..core import AssemblyError, DataFileError, get_logger
from .mesh import Mesh

logger = get_logger(__name__)

# Barycentric coordinates of the quadrature points; row q holds the three
# nodal basis values at point q.
BARYCENTRIC = np.array(
    [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]
)
QUAD_WEIGHTS = np.full(3, 1.0 / 3.0)

DEGENERATE_RTOL = 1e-14

Field2D = Callable[[NDArray[np.float64], NDArray[np.float64]], Any]
ScalarMap = Callable[[NDArray[np.float64]], Any]


@dataclass(frozen=True, eq=False)
class QuadratureTable:
    """Per-triangle quadrature points and weights.

    Attributes:
        points: (n_triangles, 3, 2) physical coordinates
        weights: (n_triangles, 3) weights, summing to the triangle area
    """

    points: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def shape(self) -> tuple[int, int]:
        """(n_triangles, points per triangle)."""
        return (int(self.weights.shape[0]), int(self.weights.shape[1]))


def _areas(mesh: Mesh) -> NDArray[np.float64]:
    areas = mesh.signed_areas()
    if areas.size:
        span = np.ptp(mesh.vertices, axis=0)
        scale = float(span[0] * span[1]) or 1.0
        degenerate = np.flatnonzero(np.abs(areas) <= DEGENERATE_RTOL * scale)
        if degenerate.size:
            tri = int(degenerate[0])
            raise AssemblyError(
                f"Degenerate triangle {tri} with area {areas[tri]!r}",
                triangle=tri,
                details={"vertices": mesh.triangles[tri].tolist()},
            )
    return np.abs(areas)


def quadrature_table(mesh: Mesh) -> QuadratureTable:
    """Quadrature points and weights of every triangle."""
    areas = _areas(mesh)
    corners = mesh.vertices[mesh.triangles]
    points = np.einsum("qi,tid->tqd", BARYCENTRIC, corners)
    weights = areas[:, None] * QUAD_WEIGHTS[None, :]
    return QuadratureTable(points=points, weights=weights)


def _element_stiffness(mesh: Mesh, tris: NDArray[np.int64]) -> NDArray[np.float64]:
    p = mesh.vertices[mesh.triangles[tris]]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = np.abs(mesh.signed_areas()[tris])
    return (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]


def _element_weighted_mass(
    weights: NDArray[np.float64], values: NDArray[np.float64]
) -> NDArray[np.float64]:
    # sum_q w_tq * value_tq * phi_i(q) * phi_j(q)
    return np.einsum("tq,qi,qj->tij", weights * values, BARYCENTRIC, BARYCENTRIC)


def _chunks(n: int, threads: int) -> list[NDArray[np.int64]]:
    if threads <= 1 or n < 2 * threads:
        return [np.arange(n)]
    return [c for c in np.array_split(np.arange(n), threads) if c.size]


def _scatter_matrix(
    mesh: Mesh,
    element: Callable[[NDArray[np.int64]], NDArray[np.float64]],
    full: bool,
    threads: int,
) -> sp.csr_matrix:
    n = mesh.n_vertices
    chunks = _chunks(mesh.n_triangles, threads)

    def build(tris: NDArray[np.int64]) -> sp.csr_matrix:
        local = element(tris)
        t = mesh.triangles[tris]
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    if len(chunks) == 1:
        matrix = build(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(build, chunks))
        matrix = parts[0]
        for part in parts[1:]:
            matrix = matrix + part

    matrix = matrix.tocsr()
    matrix.sort_indices()
    if full:
        return matrix
    interior = mesh.interior_vertices
    return matrix[interior][:, interior].tocsr()


def _scatter_vector(
    mesh: Mesh, local: NDArray[np.float64], full: bool
) -> NDArray[np.float64]:
    vector = np.bincount(
        mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices
    ).astype(np.float64)
    if full:
        return vector
    return vector[mesh.interior_vertices]


def assemble_stiffness(mesh: Mesh, full: bool = False, threads: int = 1) -> sp.csr_matrix:
    """Stiffness matrix, entries int grad(theta_i) . grad(theta_j).

    Raises:
        AssemblyError: On a degenerate triangle
    """
    _areas(mesh)
    return _scatter_matrix(mesh, lambda tris: _element_stiffness(mesh, tris), full, threads)


def assemble_mass(mesh: Mesh, full: bool = False, threads: int = 1) -> sp.csr_matrix:
    """Mass matrix, entries int theta_i theta_j."""
    table = quadrature_table(mesh)
    ones = np.ones(table.shape)
    return _scatter_matrix(
        mesh,
        lambda tris: _element_weighted_mass(table.weights[tris], ones[tris]),
        full,
        threads,
    )


def assemble_weighted_mass(
    mesh: Mesh,
    weight: Any,
    full: bool = False,
    threads: int = 1,
    table: QuadratureTable | None = None,
) -> sp.csr_matrix:
    """Weighted mass matrix, entries int weight * theta_i theta_j.

    Args:
        mesh: Triangulation
        weight: Values at every quadrature point, shape (n_triangles, 3) or flat
        full: Keep boundary rows and columns
        threads: Worker threads for element chunks
        table: Precomputed quadrature table

    Raises:
        AssemblyError: If the weight table does not match the quadrature table
    """
    table = table or quadrature_table(mesh)
    values = np.asarray(weight, dtype=np.float64)
    if values.size != table.weights.size:
        raise AssemblyError(
            "Weight table does not match the quadrature table",
            details={"weights": int(values.size), "quadrature_points": int(table.weights.size)},
        )
    values = values.reshape(table.shape)
    return _scatter_matrix(
        mesh,
        lambda tris: _element_weighted_mass(table.weights[tris], values[tris]),
        full,
        threads,
    )


def _load_from_values(
    mesh: Mesh, table: QuadratureTable, values: NDArray[np.float64], full: bool
) -> NDArray[np.float64]:
    local = (table.weights * values) @ BARYCENTRIC
    return _scatter_vector(mesh, local, full)


def assemble_load(
    mesh: Mesh,
    field: Field2D,
    full: bool = False,
    table: QuadratureTable | None = None,
) -> NDArray[np.float64]:
    """Load vector, entries int field * theta_i by quadrature.

    Args:
        mesh: Triangulation
        field: Vectorized function (x, y) -> value
        full: Keep boundary entries
        table: Precomputed quadrature table
    """
    table = table or quadrature_table(mesh)
    x = table.points[..., 0]
    y = table.points[..., 1]
    values = np.broadcast_to(np.asarray(field(x, y), dtype=np.float64), table.shape)
    return _load_from_values(mesh, table, values, full)


def quadrature_values(mesh: Mesh, u: NDArray[np.float64]) -> NDArray[np.float64]:
    """Values of the P1 interpolant of an interior vector at the quadrature points."""
    nodal = mesh.interior_to_full(u)[mesh.triangles]
    return nodal @ BARYCENTRIC.T


def assemble_nonlinear_load(
    mesh: Mesh,
    u: NDArray[np.float64],
    f: ScalarMap,
    full: bool = False,
    table: QuadratureTable | None = None,
) -> NDArray[np.float64]:
    """Load of f(u_h), entries int f(u_h) theta_i with u_h the P1 interpolant.

    ``f`` is evaluated at the quadrature points of u_h (no nodal interpolation
    of the composition).
    """
    table = table or quadrature_table(mesh)
    uq = quadrature_values(mesh, u)
    values = np.broadcast_to(np.asarray(f(uq), dtype=np.float64), table.shape)
    return _load_from_values(mesh, table, values, full)


def l2_error(
    mesh: Mesh,
    u: NDArray[np.float64],
    exact: Field2D,
    table: QuadratureTable | None = None,
) -> float:
    """Quadrature L2 distance between the interpolant of u and a closed-form field."""
    table = table or quadrature_table(mesh)
    uq = quadrature_values(mesh, u)
    ex = np.asarray(exact(table.points[..., 0], table.points[..., 1]), dtype=np.float64)
    return float(np.sqrt(np.sum(table.weights * (uq - ex) ** 2)))


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Interior discrete operators of one mesh.

    Attributes:
        mesh: Triangulation
        stiffness: Interior stiffness matrix K (SPD)
        mass: Interior mass matrix M (SPD)
        quadrature: Quadrature table shared by all integrals
    """

    mesh: Mesh
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    quadrature: QuadratureTable

    @classmethod
    def assemble(cls, mesh: Mesh, threads: int = 1) -> FemSystem:
        """Assemble K, M and the quadrature table."""
        table = quadrature_table(mesh)
        stiffness = assemble_stiffness(mesh, threads=threads)
        mass = assemble_mass(mesh, threads=threads)
        logger.info(
            "fem_system_assembled",
            interior=mesh.n_interior,
            triangles=mesh.n_triangles,
            nnz=int(stiffness.nnz),
            threads=threads,
        )
        return cls(mesh=mesh, stiffness=stiffness, mass=mass, quadrature=table)

    @property
    def size(self) -> int:
        """Number of interior unknowns."""
        return self.mesh.n_interior

    def weighted_mass(self, weight: Any) -> sp.csr_matrix:
        """Interior weighted mass matrix."""
        return assemble_weighted_mass(self.mesh, weight, table=self.quadrature)

    def load(self, field: Field2D) -> NDArray[np.float64]:
        """Interior load vector of a field."""
        return assemble_load(self.mesh, field, table=self.quadrature)

    def nonlinear_load(self, u: NDArray[np.float64], f: ScalarMap) -> NDArray[np.float64]:
        """Interior load vector of f(u_h)."""
        return assemble_nonlinear_load(self.mesh, u, f, table=self.quadrature)

    def at_quadrature(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        """Interpolant values at the quadrature points."""
        return quadrature_values(self.mesh, u)


def write_coo(matrix: sp.spmatrix, path: Path | str) -> Path:
    """Export a sparse matrix as 'row col value' lines."""
    path = Path(path)
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{int(coo.row[i])} {int(coo.col[i])} {float(coo.data[i])!r}\n" for i in order
    ]
    try:
        path.write_text("".join(lines), encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Cannot write matrix: {e!s}", path=str(path))
    return path
