"""Inversion of the finite-dimensional fiber map.

The fiber map sends a height v to the heights of F at the fiber point over v.
Solutions of F(u) = g are the fiber points whose image equals the heights of
g. In one dimension they are found as crossings along a traced fiber; in two
dimensions from self-intersections of the image of a closed path.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from ..core import ConfigurationError, ConvergenceError, InversionError, LinearSolverError, get_logger
from .fiber import FiberPoint, FiberSolver, FiberTrace

logger = get_logger(__name__)

Vector = NDArray[np.float64]

MAX_SECANT_STEPS = 60
MAX_LINE_SEARCH_HALVINGS = 20
MAX_PREIMAGE_ITERATIONS = 50
CONDITION_FLOOR = 1e-12
GRAZING_FACTOR = 10.0
INTERSECT_TOL = 1e-9


@dataclass(frozen=True)
class PathSpec:
    """Sampled path in the two-dimensional height plane.

    Attributes:
        kind: circle, ray, segment or samples
        resolution: Number of samples
        radius: Circle radius
        angle: Ray angle in radians
        length: Ray length
        start: Segment start
        end: Segment end
        samples: Explicit points for kind ``samples``
    """

    kind: Literal["circle", "ray", "segment", "samples"]
    resolution: int = 128
    radius: float = 1.0
    angle: float = 0.0
    length: float = 1.0
    start: tuple[float, float] = (0.0, 0.0)
    end: tuple[float, float] = (1.0, 0.0)
    samples: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "circle":
            if self.resolution < 8:
                raise ConfigurationError("Closed paths need at least 8 samples", config_key="resolution")
            if not self.radius > 0:
                raise ConfigurationError("Circle radius must be positive", config_key="radius")
        elif self.kind == "samples":
            if not self.samples:
                raise ConfigurationError("Sample path needs at least one point", config_key="samples")
        elif self.resolution < 1:
            raise ConfigurationError("Path resolution must be positive", config_key="resolution")

    @classmethod
    def circle(cls, radius: float, resolution: int = 128) -> PathSpec:
        return cls(kind="circle", radius=radius, resolution=resolution)

    @classmethod
    def ray(cls, angle: float, length: float, resolution: int = 100) -> PathSpec:
        return cls(kind="ray", angle=angle, length=length, resolution=resolution)

    @property
    def closed(self) -> bool:
        return self.kind == "circle"

    @property
    def period(self) -> float:
        """Parameter length of a closed path."""
        return 2.0 * math.pi

    def sample(self) -> tuple[Vector, Vector]:
        """Curve parameters s and points v of shape (m, 2)."""
        if self.kind == "circle":
            s = np.linspace(0.0, 2.0 * math.pi, self.resolution, endpoint=False)
            v = self.radius * np.column_stack([np.cos(s), np.sin(s)])
        elif self.kind == "ray":
            s = np.linspace(0.0, self.length, self.resolution)
            v = s[:, None] * np.array([math.cos(self.angle), math.sin(self.angle)])
        elif self.kind == "segment":
            s = np.linspace(0.0, 1.0, self.resolution)
            a, b = np.asarray(self.start), np.asarray(self.end)
            v = a[None, :] + s[:, None] * (b - a)[None, :]
        else:
            v = np.asarray(self.samples, dtype=np.float64).reshape(-1, 2)
            s = np.arange(v.shape[0], dtype=np.float64)
        return s, v


_PATH_PATTERN = re.compile(r"^(circle|ray|segment):(.*)$")


def parse_path(text: str, resolution: int | None = None) -> PathSpec:
    """Parse ``circle:r=R``, ``ray:angle=A[,length=L]`` or ``segment:from=x;y,to=x;y``.

    An ``n=`` entry sets the resolution.

    Raises:
        ConfigurationError: On malformed text
    """
    match = _PATH_PATTERN.match(text.strip())
    if match is None:
        raise ConfigurationError(f"Unknown path '{text}'", config_key="path")
    kind, body = match.groups()
    try:
        entries = dict(item.split("=", 1) for item in body.split(",") if item)
    except ValueError:
        raise ConfigurationError(f"Malformed path '{text}'", config_key="path")

    def point(value: str) -> tuple[float, float]:
        x, y = value.split(";")
        return (float(x), float(y))

    try:
        n = int(entries.pop("n")) if "n" in entries else resolution
        if kind == "circle":
            return PathSpec(kind="circle", radius=float(entries["r"]), resolution=n or 128)
        if kind == "ray":
            return PathSpec(
                kind="ray",
                angle=float(entries["angle"]),
                length=float(entries.get("length", 1.0)),
                resolution=n or 100,
            )
        return PathSpec(
            kind="segment", start=point(entries["from"]), end=point(entries["to"]), resolution=n or 100
        )
    except (KeyError, ValueError) as e:
        raise ConfigurationError(f"Malformed path '{text}': {e!s}", config_key="path")


@dataclass(frozen=True, eq=False)
class Solution:
    """Solution of F(u) = g.

    Attributes:
        u: Interior nodal values
        residual: ||F(u) - g||_Y
        height: heights_X(u)
        newton_path: (parameter, residual) log of the refinement
        label: Optional name within a construction
    """

    u: Vector
    residual: float
    height: Vector
    newton_path: list[tuple[float, ...]] = field(default_factory=list)
    label: str | None = None


@dataclass(frozen=True, eq=False)
class CrossingReport:
    """Result of a one-dimensional crossing search."""

    solutions: list[Solution]
    grazing: list[float]
    target: float


@dataclass(frozen=True, eq=False)
class ImageCurve:
    """Image of a sampled path under the fiber map.

    Attributes:
        path: Sampled path
        s: Parameters of the computed samples
        v: Heights of the computed samples, (m, 2)
        b: Image heights, (m, 2)
        residual_h: Fiber residual per sample
        points: Fiber points per sample
        failed_index: First sample whose corrector failed, if any
    """

    path: PathSpec
    s: Vector
    v: Vector
    b: Vector
    residual_h: Vector
    points: list[FiberPoint]
    failed_index: int | None = None

    @property
    def complete(self) -> bool:
        return self.failed_index is None


@dataclass(frozen=True, eq=False)
class DoublePoint:
    """Self-intersection Z of a closed curve at parameters s1 < s2."""

    point: Vector
    s1: float
    s2: float


def _solution_from_point(
    solver: FiberSolver, point: FiberPoint, rhs: Vector | None, path: list[tuple[float, ...]], label: str | None
) -> Solution:
    residual = solver.residual(point.u, rhs)
    tol = solver.problem.spec.tol_solution
    if residual > tol:
        raise InversionError(
            f"Solution residual {residual!r} exceeds {tol!r}",
            stage="residual",
            details={"height": point.heights.tolist()},
        )
    return Solution(u=point.u, residual=residual, height=point.heights, newton_path=path, label=label)


def solve_1d(solver: FiberSolver, trace: FiberTrace, target: float | None = None) -> CrossingReport:
    """Solutions of F(u) = g along a one-dimensional fiber trace.

    Sign changes of F_heights - target between adjacent samples are refined by
    secant steps (bisection when a step leaves the bracket). Local extrema
    within the grazing threshold of the target are reported but not counted.

    Args:
        solver: Fiber solver of a problem with |J| = 1
        trace: Fiber samples, in any order
        target: Height of the RHS; defaults to heights_Y(g)

    Raises:
        InversionError: If |J| != 1 or a bracket is not resolved
    """
    d = solver.decomposition
    if d.dimension != 1:
        raise InversionError("One-dimensional inversion needs |J| = 1", stage="solve_1d")
    if target is None:
        target = float(d.heights_Y(solver.problem.rhs)[0])
    tol_h = solver.problem.spec.tol_solution / 10.0
    grazing_tol = GRAZING_FACTOR * solver.tol_fiber

    # Abscissa is the height itself so traces with any direction sign agree
    by_height: dict[float, FiberPoint] = {}
    for point in trace.points:
        by_height.setdefault(float(point.heights[0]), point)
    heights = np.array(sorted(by_height))
    points = [by_height[h] for h in heights]
    phi = np.array([p.F_heights[0] - target for p in points])

    grazing: list[float] = []
    roots: list[Solution] = []
    near = np.abs(phi) <= tol_h
    for i in range(1, len(phi) - 1):
        extremum = (phi[i] - phi[i - 1]) * (phi[i + 1] - phi[i]) < 0
        if extremum and abs(phi[i]) < grazing_tol and phi[i - 1] * phi[i + 1] > 0:
            grazing.append(float(heights[i]))
            near[i] = False
            logger.warning("grazing_crossing", height=float(heights[i]), distance=float(phi[i]))

    for i in np.flatnonzero(near):
        roots.append(_solution_from_point(solver, points[i], None, [(float(heights[i]), float(phi[i]))], None))

    skip = set(float(h) for h in grazing)
    for i in range(len(phi) - 1):
        if near[i] or near[i + 1] or float(heights[i]) in skip or float(heights[i + 1]) in skip:
            continue
        if phi[i] * phi[i + 1] < 0:
            roots.append(_refine_crossing(solver, points[i], points[i + 1], phi[i], phi[i + 1], target, tol_h))

    roots.sort(key=lambda sol: float(sol.height[0]))
    logger.info("crossings_found", solutions=len(roots), grazing=len(grazing), target=target)
    return CrossingReport(solutions=roots, grazing=grazing, target=target)


def _refine_crossing(
    solver: FiberSolver,
    left: FiberPoint,
    right: FiberPoint,
    phi_left: float,
    phi_right: float,
    target: float,
    tol_h: float,
) -> Solution:
    lo, hi = float(left.heights[0]), float(right.heights[0])
    f_lo, f_hi = phi_left, phi_right
    u_lo, u_hi = left.u, right.u
    x0, f0, x1, f1 = lo, f_lo, hi, f_hi
    path: list[tuple[float, ...]] = []

    for _ in range(MAX_SECANT_STEPS):
        x = x1 - f1 * (x1 - x0) / (f1 - f0) if f1 != f0 else 0.5 * (lo + hi)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        warm = u_lo if abs(x - lo) <= abs(hi - x) else u_hi
        point = solver.find_fiber_point(np.array([x]), warm)
        fx = float(point.F_heights[0] - target)
        path.append((x, fx))
        if abs(fx) <= tol_h:
            logger.debug("crossing_refined", height=x, steps=len(path))
            return _solution_from_point(solver, point, None, path, None)
        if (fx < 0) == (f_lo < 0):
            lo, f_lo, u_lo = x, fx, point.u
        else:
            hi, f_hi, u_hi = x, fx, point.u
        x0, f0, x1, f1 = x1, f1, x, fx

    raise InversionError(
        f"Unresolved bracket after {MAX_SECANT_STEPS} secant steps",
        stage="solve_1d",
        details={"bracket": [lo, hi]},
    )


def image_path_2d(solver: FiberSolver, path: PathSpec) -> ImageCurve:
    """Image of a path: the F-heights of the fiber point over every sample.

    Samples are warm-started from the previous one. A corrector failure ends
    the curve and records the failing index.

    Raises:
        InversionError: If |J| != 2
    """
    if solver.decomposition.dimension != 2:
        raise InversionError("Path imaging needs |J| = 2", stage="image_path")
    s, v = path.sample()
    points: list[FiberPoint] = []
    failed: int | None = None
    u = None
    for i, height in enumerate(v):
        try:
            point = solver.find_fiber_point(height, u)
        except (ConvergenceError, LinearSolverError) as e:
            failed = i
            logger.error("image_path_failed", kind=path.kind, index=i, error=e.message)
            break
        points.append(point)
        u = point.u

    m = len(points)
    curve = ImageCurve(
        path=path,
        s=s[:m],
        v=v[:m],
        b=np.array([p.F_heights for p in points]).reshape(m, 2),
        residual_h=np.array([p.residual_h for p in points]),
        points=points,
        failed_index=failed,
    )
    logger.info("image_path_computed", kind=path.kind, samples=m, failed_index=failed)
    return curve


def image_paths(solver: FiberSolver, paths: list[PathSpec], threads: int = 1) -> list[ImageCurve]:
    """Image several independent paths, concurrently when threads > 1."""
    if threads <= 1 or len(paths) <= 1:
        return [image_path_2d(solver, path) for path in paths]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda path: image_path_2d(solver, path), paths))


def _cross(a: Vector, b: Vector) -> Vector:
    return np.asarray(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])


def find_self_intersection(
    points: Vector, s: Vector | None = None, period: float | None = None
) -> list[DoublePoint]:
    """All self-intersections of a closed polyline, sorted by s1.

    Every pair of non-adjacent segments is tested. Crossings found on several
    segment pairs around a shared vertex are merged.

    Args:
        points: (m, 2) samples of the closed curve
        s: Parameters of the samples (default 0..m-1)
        period: Parameter length of the closed curve (default m * spacing)
    """
    pts = np.asarray(points, dtype=np.float64)
    m = pts.shape[0]
    if m < 4:
        return []
    params = np.arange(m, dtype=np.float64) if s is None else np.asarray(s, dtype=np.float64)
    spacing = float(params[1] - params[0])
    period = period if period is not None else spacing * m
    ends = np.append(params[1:], params[0] + period)

    p = pts
    r = np.roll(pts, -1, axis=0) - pts
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]

    denom = _cross(r[i], r[j])
    usable = np.abs(denom) > 1e-300
    i, j, denom = i[usable], j[usable], denom[usable]
    qp = p[j] - p[i]
    t = _cross(qp, r[j]) / denom
    u = _cross(qp, r[i]) / denom
    hit = (t >= -INTERSECT_TOL) & (t <= 1 + INTERSECT_TOL) & (u >= -INTERSECT_TOL) & (u <= 1 + INTERSECT_TOL)

    found: list[DoublePoint] = []
    for a, b, ta, ub in zip(i[hit], j[hit], t[hit], u[hit], strict=True):
        s1 = (params[a] + ta * (ends[a] - params[a])) % period
        s2 = (params[b] + ub * (ends[b] - params[b])) % period
        s1, s2 = min(s1, s2), max(s1, s2)
        point = p[a] + ta * r[a]
        if any(_same_crossing(dp, s1, s2, spacing, period) for dp in found):
            continue
        found.append(DoublePoint(point=point, s1=float(s1), s2=float(s2)))

    found.sort(key=lambda dp: dp.s1)
    return found


def _same_crossing(dp: DoublePoint, s1: float, s2: float, spacing: float, period: float) -> bool:
    def close(x: float, y: float) -> bool:
        gap = abs(x - y) % period
        return min(gap, period - gap) <= 1.5 * spacing

    return (close(dp.s1, s1) and close(dp.s2, s2)) or (close(dp.s1, s2) and close(dp.s2, s1))


def fd_jacobian(
    solver: FiberSolver, v: Vector, delta: float | None = None, u_warm: Vector | None = None
) -> Vector:
    """Central-difference Jacobian of the fiber map at v."""
    v = np.asarray(v, dtype=np.float64)
    delta = delta or 1e-4 * (1.0 + float(np.linalg.norm(v)))
    columns = []
    for k in range(v.size):
        e = np.zeros(v.size)
        e[k] = delta
        plus = solver.find_fiber_point(v + e, u_warm).F_heights
        minus = solver.find_fiber_point(v - e, u_warm).F_heights
        columns.append((plus - minus) / (2.0 * delta))
    return np.column_stack(columns)


def refine_preimage(
    solver: FiberSolver,
    v_start: Vector,
    z_target: Vector,
    tol: float | None = None,
    u_warm: Vector | None = None,
    label: str | None = None,
) -> Solution:
    """Height v with fiber-map image z, by damped Newton from v_start.

    The returned solution is checked against the RHS Q_Y g + sum_j z_j phi_j^Y.

    Raises:
        InversionError: On line-search failure, a nearly singular Jacobian or
            the iteration cap
    """
    d = solver.decomposition
    z = np.asarray(z_target, dtype=np.float64)
    v = np.asarray(v_start, dtype=np.float64)
    tol = tol or solver.problem.spec.tol_solution / 10.0

    point = solver.find_fiber_point(v, u_warm)
    r = point.F_heights - z
    norm = float(np.linalg.norm(r))
    path: list[tuple[float, ...]] = [(*v.tolist(), norm)]

    for _ in range(MAX_PREIMAGE_ITERATIONS):
        if norm <= tol:
            break
        jac = fd_jacobian(solver, v, u_warm=point.u)
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= CONDITION_FLOOR * sv[0]:
            raise InversionError(
                "Fiber-map Jacobian is numerically singular",
                stage="preimage",
                details={"singular_values": sv.tolist(), "height": v.tolist()},
            )
        step = np.linalg.solve(jac, -r)
        lam = 1.0
        for _ in range(MAX_LINE_SEARCH_HALVINGS):
            trial_v = v + lam * step
            try:
                trial = solver.find_fiber_point(trial_v, point.u)
            except (ConvergenceError, LinearSolverError):
                lam /= 2.0
                continue
            trial_r = trial.F_heights - z
            trial_norm = float(np.linalg.norm(trial_r))
            if trial_norm < (1.0 - 1e-4 * lam) * norm:
                v, point, r, norm = trial_v, trial, trial_r, trial_norm
                break
            lam /= 2.0
        else:
            raise InversionError("Line search failed", stage="preimage", details={"height": v.tolist()})
        path.append((*v.tolist(), norm))
    else:
        if norm > tol:
            raise InversionError(
                f"Preimage not found in {MAX_PREIMAGE_ITERATIONS} iterations",
                stage="preimage",
                details={"residual": norm},
            )

    rhs = d.project_Y(solver.problem.rhs, "horizontal") + d.dual_from_heights(z)
    logger.debug("preimage_refined", height=v.tolist(), iterations=len(path) - 1, residual=norm)
    return _solution_from_point(solver, point, rhs, path, label)


def scan_ray_for_target(curve: ImageCurve, z_target: Vector) -> Vector | None:
    """Starting height on a sampled ray whose image passes closest to z.

    The image polyline segment nearest to z is found and its foot point is
    mapped back to heights by linear interpolation.
    """
    if curve.b.shape[0] < 2:
        return None
    z = np.asarray(z_target, dtype=np.float64)
    a = curve.b[:-1]
    seg = curve.b[1:] - a
    lengths = np.einsum("ij,ij->i", seg, seg)
    lengths[lengths == 0] = np.finfo(float).tiny
    t = np.clip(np.einsum("ij,ij->i", z - a, seg) / lengths, 0.0, 1.0)
    foot = a + t[:, None] * seg
    k = int(np.argmin(np.linalg.norm(foot - z, axis=1)))
    return np.asarray(curve.v[k] + t[k] * (curve.v[k + 1] - curve.v[k]))


@dataclass(frozen=True, eq=False)
class FourSolutions:
    """Result of the circle and half-axis construction."""

    target: Vector
    double_point: DoublePoint
    solutions: dict[str, Solution]
    circle: ImageCurve
    rays: list[ImageCurve]


def four_solution_construction(solver: FiberSolver, threads: int = 1) -> FourSolutions:
    """Four preimages of a double point of the image of a circle.

    The double point Z of the circle image gives two preimages U and D at its
    curve parameters; the half-axes of the first height coordinate give two
    more, L and R.

    Raises:
        InversionError: If the circle image has no double point or a preimage
            cannot be refined
    """
    cfg = solver.problem.spec.config.inversion
    circle = image_path_2d(solver, PathSpec.circle(cfg.circle_radius, cfg.circle_resolution))
    if not circle.complete:
        raise InversionError("Circle image is incomplete", stage="double_point")
    crossings = find_self_intersection(circle.b, circle.s, circle.path.period)
    if not crossings:
        raise InversionError("Circle image has no double point", stage="double_point")
    # The horizontal half-axes can only reach a Z near the first image axis
    dp = min(crossings, key=lambda c: abs(float(c.point[1])))
    logger.info("double_point_found", point=dp.point.tolist(), s1=dp.s1, s2=dp.s2, count=len(crossings))

    radius = cfg.circle_radius
    u_index = [int(np.argmin(np.abs(circle.s - s))) for s in (dp.s1, dp.s2)]
    starts = [radius * np.array([math.cos(s), math.sin(s)]) for s in (dp.s1, dp.s2)]
    upper = refine_preimage(solver, starts[0], dp.point, u_warm=circle.points[u_index[0]].u)
    lower = refine_preimage(solver, starts[1], dp.point, u_warm=circle.points[u_index[1]].u)

    d = solver.decomposition
    z = 0.5 * (d.heights_Y(solver.evaluate_F(upper.u)) + d.heights_Y(solver.evaluate_F(lower.u)))
    solutions = {
        "U": refine_preimage(solver, upper.height, z, u_warm=upper.u, label="U"),
        "D": refine_preimage(solver, lower.height, z, u_warm=lower.u, label="D"),
    }
    if solutions["U"].height[1] < solutions["D"].height[1]:
        solutions["U"], solutions["D"] = (
            replace(solutions["D"], label="U"),
            replace(solutions["U"], label="D"),
        )

    rays = image_paths(
        solver,
        [PathSpec.ray(0.0, cfg.ray_length, cfg.ray_resolution), PathSpec.ray(math.pi, cfg.ray_length, cfg.ray_resolution)],
        threads=threads,
    )
    for label, ray in zip(("R", "L"), rays, strict=True):
        start = scan_ray_for_target(ray, z)
        if start is None:
            raise InversionError(f"Half-axis scan for {label} is empty", stage="half_axis")
        k = int(np.argmin(np.linalg.norm(ray.v - start, axis=1)))
        solutions[label] = refine_preimage(solver, start, z, u_warm=ray.points[k].u, label=label)

    logger.info(
        "four_solutions_found",
        target=z.tolist(),
        heights={k: sol.height.tolist() for k, sol in solutions.items()},
    )
    return FourSolutions(target=z, double_point=dp, solutions=solutions, circle=circle, rays=rays)
