"""Command-line front end.

Every command writes its data files, a ``timings.json`` and a ``manifest.json``
into ``--out``.
Exit codes: 0 success, 2 configuration error, 3 convergence failure or missed
tolerance, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .core import (
    ConfigurationError,
    ConvergenceError,
    DataFileError,
    FiberFemError,
    InversionError,
    LinearSolverError,
    MeshError,
    get_logger,
    settings,
    setup_logging,
)
from .engine.decomposition import index_set
from .engine.fiber import FiberSolver, FiberTraceError
from .engine.inversion import (
    PathSpec,
    Solution,
    find_self_intersection,
    image_path_2d,
    parse_path,
    refine_preimage,
)
from .engine.mesh import save_mesh, uniform_rectangle_mesh, validate
from .engine.problems import ProblemRegistry, ProblemSpec
from .models import (
    DoublePointRecord,
    EigenRecord,
    ErrorDetail,
    RunManifest,
    SolutionRecord,
)
from .services import FiberPipeline
from .services.io import (
    read_vector_csv,
    write_columns_csv,
    write_curve_csv,
    write_json,
    write_trace_csv,
    write_vector_csv,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

EIGEN_RESIDUAL_BOUND = 1e-8


@dataclass
class RunContext:
    """State shared by a command handler."""

    args: argparse.Namespace
    out: Path
    manifest: RunManifest
    pipeline: FiberPipeline

    def output(self, name: str) -> Path:
        self.manifest.outputs.append(name)
        return self.out / name

    def fail(self, code: str, message: str, **details: object) -> None:
        self.manifest.failures.append(ErrorDetail(code=code, message=message, details=dict(details)))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline stage."""
    parser = argparse.ArgumentParser(
        prog="fiberfem",
        description="Fiber-based solver for -Laplace(u) - f(u) = g on polygons",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default 1)")
    parser.add_argument(
        "--log", choices=["quiet", "info", "debug"], default=None, help="log level (FIBERFEM_LOG)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_out(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    def with_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="problem config file or registered name")
        p.add_argument("--nx", type=_positive_int, default=None, help="override mesh cells along x")
        p.add_argument("--ny", type=_positive_int, default=None, help="override mesh cells along y")
        with_out(p)

    p = sub.add_parser("mesh", help="write a uniform rectangle mesh")
    p.add_argument("--nx", type=_positive_int, default=32)
    p.add_argument("--ny", type=_positive_int, default=64)
    p.add_argument("--width", type=_positive_float, default=1.0)
    p.add_argument("--height", type=_positive_float, default=2.0)
    with_out(p)

    p = sub.add_parser("eigen", help="smallest Dirichlet eigenpairs")
    with_config(p)
    p.add_argument("--k", type=_positive_int, default=None, help="number of eigenpairs")

    def with_trace(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tmin", type=float, default=None)
        p.add_argument("--tmax", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--direction", type=_float_list, default=None, help="comma-separated unit vector")

    p = sub.add_parser("trace", help="trace a fiber by predictor-corrector steps")
    with_config(p)
    with_trace(p)
    p.add_argument("--lower-bound", action="store_true", help="estimate the Jacobian lower bound")

    p = sub.add_parser("solve", help="eigen, trace and crossing search (|J| = 1)")
    with_config(p)
    with_trace(p)

    p = sub.add_parser("path2d", help="image of a path in the height plane (|J| = 2)")
    with_config(p)
    p.add_argument("--path", required=True, help='"circle:r=R", "ray:angle=A[,length=L]"')

    p = sub.add_parser("preimage", help="refine a preimage of a target height (|J| = 2)")
    with_config(p)
    p.add_argument("--target", type=_float_list, required=True, help="bx,by")
    p.add_argument("--start", type=_float_list, required=True, help="vx,vy")

    p = sub.add_parser("four", help="circle and half-axis construction of four solutions")
    with_config(p)

    p = sub.add_parser("residual", help="recompute ||F(u) - g||_Y of a stored solution")
    with_config(p)
    p.add_argument("--solution", type=Path, required=True, help="node_index,value CSV")

    return parser


def _load_spec(ctx: RunContext) -> ProblemSpec:
    args = ctx.args
    spec = ProblemRegistry().resolve(args.config)
    mesh = spec.config.mesh.model_copy(
        update={k: v for k, v in (("nx", args.nx), ("ny", args.ny)) if v is not None}
    )
    updates: dict[str, object] = {"mesh": mesh.model_dump()}
    if getattr(args, "k", None) is not None:
        updates["k"] = args.k
    if getattr(args, "tmin", None) is not None or getattr(args, "tmax", None) is not None or (
        getattr(args, "steps", None) is not None or getattr(args, "direction", None) is not None
    ):
        trace = spec.config.trace.model_dump()
        for key, attr in (("t_min", "tmin"), ("t_max", "tmax"), ("steps", "steps"), ("direction", "direction")):
            if getattr(args, attr) is not None:
                trace[key] = getattr(args, attr)
        updates["trace"] = trace
    spec = spec.with_updates(**updates)

    m = ctx.manifest
    m.config_hash = hashlib.sha256(spec.config.model_dump_json().encode()).hexdigest()
    m.mesh = {k: float(v) for k, v in spec.config.mesh.model_dump().items()}
    m.tolerances = {"fiber": spec.tol_fiber, "solution": spec.tol_solution}
    return spec


def _solver(ctx: RunContext, spec: ProblemSpec) -> FiberSolver:
    solver = ctx.pipeline.solver(spec)
    ctx.manifest.eigenvalues = [float(x) for x in solver.problem.basis.eigenvalues]
    ctx.manifest.index_set = list(solver.problem.labels)
    return solver


def _write_solutions(ctx: RunContext, solutions: Sequence[Solution], tol: float) -> None:
    records = []
    for i, sol in enumerate(solutions):
        name = f"solution_{sol.label or i + 1}.csv"
        write_vector_csv(ctx.output(name), sol.u)
        records.append(
            SolutionRecord(
                height=[float(h) for h in sol.height],
                residual=sol.residual,
                values_file=name,
                label=sol.label,
            )
        )
        if sol.residual > tol:
            ctx.fail("TOLERANCE", "Solution residual above tol_solution", values_file=name, residual=sol.residual)
    write_json(ctx.output("solutions.json"), records)


def cmd_mesh(ctx: RunContext) -> None:
    args = ctx.args
    mesh = uniform_rectangle_mesh(args.width, args.height, args.nx, args.ny)
    ctx.manifest.mesh = {"nx": args.nx, "ny": args.ny, "width": args.width, "height": args.height}
    report = validate(mesh)
    for check in report.checks:
        if not check.passed:
            ctx.fail("MESH_ERROR", check.message, check=check.name)
    save_mesh(mesh, ctx.output("mesh.json"))
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, {mesh.n_interior} interior")


def cmd_eigen(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    basis = ctx.pipeline.discretization(spec).basis
    ctx.manifest.eigenvalues = [float(x) for x in basis.eigenvalues]
    ctx.manifest.index_set = index_set(basis.eigenvalues, spec.interval)
    names = [f"psi_{j + 1}" for j in range(basis.count)]
    write_columns_csv(ctx.output("eigenvectors.csv"), names, basis.eigenvectors)
    record = EigenRecord(
        eigenvalues=[float(x) for x in basis.eigenvalues],
        eigenvectors_file="eigenvectors.csv",
        residuals=[float(x) for x in basis.residuals],
    )
    write_json(ctx.output("eigen.json"), record)
    for j, res in enumerate(basis.residuals):
        if res > EIGEN_RESIDUAL_BOUND:
            ctx.fail("TOLERANCE", "Eigen residual above bound", label=j + 1, residual=float(res))
    for j, value in enumerate(basis.eigenvalues):
        print(f"lambda_{j + 1} = {float(value)!r}")


def cmd_trace(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    solver = _solver(ctx, spec)
    try:
        trace = ctx.pipeline.trace(spec, solver)
    except FiberTraceError as e:
        write_trace_csv(ctx.output("trace.csv"), e.partial)
        raise
    write_trace_csv(ctx.output("trace.csv"), trace)
    for t, point in zip(trace.t, trace.points, strict=True):
        if point.residual_h > spec.tol_fiber:
            ctx.fail("TOLERANCE", "Fiber residual above tol_fiber", t=float(t), residual=point.residual_h)
    if ctx.args.lower_bound:
        estimate = solver.lower_bound_estimate(trace.points)
        write_json(ctx.output("lower_bound.json"), {"estimate": estimate, "samples": len(trace)})
        if estimate <= 0:
            ctx.fail("LOWER_BOUND", "Lower-bound estimate is not positive", estimate=estimate)
    print(f"trace: {len(trace)} samples")


def cmd_solve(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    run = ctx.pipeline.solve_1d(spec)
    ctx.manifest.eigenvalues = [float(x) for x in run.problem.basis.eigenvalues]
    ctx.manifest.index_set = list(run.problem.labels)
    write_trace_csv(ctx.output("trace.csv"), run.trace)
    _write_solutions(ctx, run.report.solutions, spec.tol_solution)
    print(f"solutions: {len(run.report.solutions)} (grazing: {len(run.report.grazing)})")


def cmd_path2d(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    solver = _solver(ctx, spec)
    text = ctx.args.path
    path = parse_path(text, resolution=None)
    # unset sizes come from the config's inversion block
    inversion = spec.config.inversion
    if path.kind == "circle" and "n=" not in text:
        path = PathSpec.circle(path.radius, inversion.circle_resolution)
    elif path.kind == "ray" and "length=" not in text:
        resolution = path.resolution if "n=" in text else inversion.ray_resolution
        path = PathSpec.ray(path.angle, inversion.ray_length, resolution)
    curve = image_path_2d(solver, path)
    write_curve_csv(ctx.output("curve.csv"), curve)
    if not curve.complete:
        ctx.fail("CONVERGENCE_ERROR", "Image path incomplete", failed_index=curve.failed_index)
    crossings = find_self_intersection(curve.b, curve.s, path.period) if path.closed and curve.complete else []
    records = [
        DoublePointRecord(point=[float(x) for x in dp.point], parameters=[dp.s1, dp.s2]) for dp in crossings
    ]
    write_json(ctx.output("double_points.json"), records)
    print(f"path: {len(curve.s)} samples, {len(records)} double point(s)")


def cmd_preimage(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    solver = _solver(ctx, spec)
    target, start = ctx.args.target, ctx.args.start
    if len(target) != 2 or len(start) != 2:
        raise ConfigurationError("--target and --start need two numbers each", config_key="target")
    solution = refine_preimage(solver, np.array(start), np.array(target))
    _write_solutions(ctx, [solution], spec.tol_solution)
    print(f"preimage: height {[float(h) for h in solution.height]}, residual {solution.residual!r}")


def cmd_four(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    result = ctx.pipeline.four_solutions(spec)
    write_curve_csv(ctx.output("curve.csv"), result.circle)
    for ray, name in zip(result.rays, ("ray_R.csv", "ray_L.csv"), strict=True):
        write_curve_csv(ctx.output(name), ray)
    dp = result.double_point
    write_json(
        ctx.output("double_points.json"),
        [DoublePointRecord(point=[float(x) for x in result.target], parameters=[dp.s1, dp.s2])],
    )
    _write_solutions(ctx, list(result.solutions.values()), spec.tol_solution)
    print(f"four solutions for Z = {[float(x) for x in result.target]}")


def cmd_residual(ctx: RunContext) -> None:
    spec = _load_spec(ctx)
    solver = _solver(ctx, spec)
    u = read_vector_csv(ctx.args.solution, size=solver.problem.size)
    residual = solver.residual(u)
    write_json(
        ctx.output("residual.json"),
        {"solution": str(ctx.args.solution), "residual": residual, "tol_solution": spec.tol_solution},
    )
    print(repr(residual))


COMMANDS: dict[str, Callable[[RunContext], None]] = {
    "mesh": cmd_mesh,
    "eigen": cmd_eigen,
    "trace": cmd_trace,
    "solve": cmd_solve,
    "path2d": cmd_path2d,
    "preimage": cmd_preimage,
    "four": cmd_four,
    "residual": cmd_residual,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log)
    threads = args.threads or settings.threads
    manifest = RunManifest(command=args.command)
    out: Path = args.out
    code = EXIT_OK
    timings: dict[str, float] = {}
    started = time.perf_counter()

    try:
        out.mkdir(parents=True, exist_ok=True)
        ctx = RunContext(args=args, out=out, manifest=manifest, pipeline=FiberPipeline(threads=threads))
        COMMANDS[args.command](ctx)
        timings.update(ctx.pipeline.timings)
    except (ConfigurationError, MeshError) as e:
        code = EXIT_CONFIG
        manifest.failures.append(ErrorDetail(**e.to_dict()))
    except ValidationError as e:
        code = EXIT_CONFIG
        manifest.failures.append(
            ErrorDetail(code="CONFIGURATION_ERROR", message=f"{e.error_count()} validation error(s)", details={"errors": str(e)})
        )
    except (ConvergenceError, LinearSolverError, InversionError) as e:
        code = EXIT_CONVERGENCE
        manifest.failures.append(ErrorDetail(**e.to_dict()))
    except DataFileError as e:
        code = EXIT_IO
        manifest.failures.append(ErrorDetail(**e.to_dict()))
    except OSError as e:
        code = EXIT_IO
        manifest.failures.append(ErrorDetail(code="IO_ERROR", message=str(e)))
    except FiberFemError as e:
        code = EXIT_CONVERGENCE
        manifest.failures.append(ErrorDetail(**e.to_dict()))

    timings["total"] = time.perf_counter() - started
    if code == EXIT_OK and not manifest.ok:
        code = EXIT_CONVERGENCE

    for failure in manifest.failures:
        print(f"error [{failure.code}]: {failure.message}", file=sys.stderr)

    # timings.json is the only file holding wall-clock values
    try:
        write_json(out / "timings.json", timings)
        manifest.outputs.extend(["timings.json", "manifest.json"])
        write_json(out / "manifest.json", manifest)
    except DataFileError as e:
        logger.error("manifest_not_written", path=e.path)
        return code or EXIT_IO

    logger.info("command_finished", command=args.command, exit_code=code, failures=len(manifest.failures))
    return code


if __name__ == "__main__":
    sys.exit(main())
