"""Triangulations of polygons with P1 nodal bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..core import DataFileError, MeshError, get_logger
from ..models import MeshCheck, MeshReport

logger = get_logger(__name__)

AREA_RTOL = 1e-12


def _frozen(array: NDArray[Any]) -> NDArray[Any]:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated polygon.

    Vertices are stored row-major by (y, x) for rectangle meshes. Boundary
    vertices carry the Dirichlet condition; every other vertex owns one dense
    interior unknown, numbered in vertex order.

    Attributes:
        vertices: (n_vertices, 2) coordinates
        triangles: (n_triangles, 3) vertex indices, counter-clockwise
        boundary_mask: (n_vertices,) True on Dirichlet vertices
        interior_index: (n_vertices,) interior unknown number, -1 on the boundary
    """

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    boundary_mask: NDArray[np.bool_]
    interior_index: NDArray[np.int64]

    @classmethod
    def from_arrays(
        cls,
        vertices: Any,
        triangles: Any,
        boundary: Any,
    ) -> Mesh:
        """Build a mesh from explicit vertex, triangle and boundary lists.

        Raises:
            MeshError: If the arrays have inconsistent shapes or indices
        """
        verts = np.asarray(vertices, dtype=np.float64)
        tris = np.asarray(triangles, dtype=np.int64)
        mask = np.asarray(boundary).astype(bool)

        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must be a list of [x, y] pairs", {"shape": verts.shape})
        if tris.size == 0:
            tris = tris.reshape(0, 3)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must be a list of vertex-index triples", {"shape": tris.shape})
        if mask.shape != (verts.shape[0],):
            raise MeshError(
                "boundary flags must have one entry per vertex",
                {"vertices": verts.shape[0], "flags": mask.shape[0] if mask.ndim else 0},
            )
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise MeshError("triangle references a missing vertex")
        if not np.all(np.isfinite(verts)):
            raise MeshError("vertex coordinates must be finite")

        interior_index = np.full(verts.shape[0], -1, dtype=np.int64)
        interior = ~mask
        interior_index[interior] = np.arange(int(interior.sum()), dtype=np.int64)

        return cls(
            vertices=_frozen(verts),
            triangles=_frozen(tris),
            boundary_mask=_frozen(mask),
            interior_index=_frozen(interior_index),
        )

    @property
    def n_vertices(self) -> int:
        """Number of vertices."""
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        """Number of triangles."""
        return int(self.triangles.shape[0])

    @property
    def n_interior(self) -> int:
        """Number of interior unknowns."""
        return int((~self.boundary_mask).sum())

    @property
    def interior_vertices(self) -> NDArray[np.int64]:
        """Vertex ids of the interior unknowns, in unknown order."""
        return np.flatnonzero(~self.boundary_mask)

    def signed_areas(self) -> NDArray[np.float64]:
        """Signed triangle areas (positive for counter-clockwise triangles)."""
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self) -> NDArray[np.int64]:
        """Unique undirected edges as sorted vertex pairs."""
        if self.n_triangles == 0:
            return np.zeros((0, 2), dtype=np.int64)
        t = self.triangles
        all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(all_edges, axis=1), axis=0)

    def boundary_edges(self) -> NDArray[np.int64]:
        """Directed edges used by exactly one triangle, oriented as in that triangle."""
        if self.n_triangles == 0:
            return np.zeros((0, 2), dtype=np.int64)
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        _, inverse, counts = np.unique(
            np.sort(directed, axis=1), axis=0, return_inverse=True, return_counts=True
        )
        return directed[counts[inverse.ravel()] == 1]

    def polygon_area(self) -> float:
        """Area enclosed by the boundary edges (shoelace sum)."""
        edges = self.boundary_edges()
        a = self.vertices[edges[:, 0]]
        b = self.vertices[edges[:, 1]]
        return float(0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    def interior_to_full(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        """Extend an interior vector by zero to all vertices."""
        full = np.zeros(self.n_vertices)
        full[~self.boundary_mask] = u
        return full

    def to_dict(self) -> dict[str, Any]:
        """Convert to the mesh file layout."""
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "triangles": [[int(i), int(j), int(k)] for i, j, k in self.triangles],
            "boundary": [int(flag) for flag in self.boundary_mask],
        }

    def to_json(self) -> str:
        """Serialize with shortest round-trip floats (Python's float repr)."""
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Mesh:
        """Parse the mesh file layout.

        Raises:
            MeshError: If required keys are missing
        """
        try:
            data = json.loads(text)
            return cls.from_arrays(data["vertices"], data["triangles"], data["boundary"])
        except (KeyError, TypeError, ValueError) as e:
            raise MeshError(f"Invalid mesh file: {e!s}")


def uniform_rectangle_mesh(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Uniform triangulation of [0, width] x [0, height].

    Every cell is split along its lower-left to upper-right diagonal.

    Args:
        width: Rectangle width
        height: Rectangle height
        nx: Cells along x
        ny: Cells along y

    Returns:
        Mesh with (nx+1)(ny+1) vertices and 2*nx*ny triangles

    Raises:
        MeshError: For non-positive dimensions or cell counts
    """
    if not (width > 0 and height > 0):
        raise MeshError("rectangle dimensions must be positive", {"width": width, "height": height})
    if nx < 1 or ny < 1:
        raise MeshError("cell counts must be at least 1", {"nx": nx, "ny": ny})

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    col = np.tile(np.arange(nx + 1), ny + 1)
    row = np.repeat(np.arange(ny + 1), nx + 1)
    boundary = (col == 0) | (col == nx) | (row == 0) | (row == ny)

    mesh = Mesh.from_arrays(vertices, triangles, boundary)
    logger.debug(
        "rectangle_mesh_built",
        nx=nx,
        ny=ny,
        vertices=mesh.n_vertices,
        interior=mesh.n_interior,
    )
    return mesh


def validate(mesh: Mesh) -> MeshReport:
    """Check the mesh invariants without modifying the mesh.

    Returns:
        MeshReport with one entry per invariant
    """
    checks: list[MeshCheck] = []

    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0)
    checks.append(
        MeshCheck(
            name="positive_area",
            passed=bad.size == 0,
            message="all triangles counter-clockwise"
            if bad.size == 0
            else f"negative area in triangles {bad[:10].tolist()}",
        )
    )

    edges = mesh.boundary_edges()
    topological = np.zeros(mesh.n_vertices, dtype=bool)
    topological[edges.ravel()] = True
    unflagged = np.flatnonzero(topological & ~mesh.boundary_mask)
    interior_ids = mesh.interior_index[~mesh.boundary_mask]
    bijective = bool(
        np.all(mesh.interior_index[mesh.boundary_mask] == -1)
        and np.array_equal(np.sort(interior_ids), np.arange(mesh.n_interior))
    )
    flags_ok = unflagged.size == 0 and bijective
    checks.append(
        MeshCheck(
            name="boundary_flags",
            passed=flags_ok,
            message="boundary flagged and interior numbering bijective"
            if flags_ok
            else f"unflagged boundary vertices {unflagged[:10].tolist()}",
        )
    )

    n_edges = int(mesh.edges().shape[0])
    euler = mesh.n_vertices - n_edges + mesh.n_triangles
    checks.append(
        MeshCheck(
            name="euler",
            passed=euler == 1,
            message=f"V - E + T = {mesh.n_vertices} - {n_edges} + {mesh.n_triangles} = {euler}",
        )
    )

    total = float(np.sum(areas))
    polygon = mesh.polygon_area()
    area_ok = polygon > 0 and abs(total - polygon) <= AREA_RTOL * polygon
    checks.append(
        MeshCheck(
            name="area",
            passed=bool(area_ok),
            message=f"triangles {total!r} vs polygon {polygon!r}",
        )
    )

    return MeshReport(checks=checks)


def save_mesh(mesh: Mesh, path: Path | str) -> Path:
    """Write the mesh JSON file."""
    path = Path(path)
    try:
        path.write_text(mesh.to_json(), encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Cannot write mesh: {e!s}", path=str(path))
    return path


def load_mesh(path: Path | str) -> Mesh:
    """Read a mesh JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Cannot read mesh: {e!s}", path=str(path))
    return Mesh.from_json(text)
