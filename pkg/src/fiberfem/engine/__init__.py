"""Numerical engine: mesh, assembly, spectral splitting, fibers and inversion."""

from .assembly import FemSystem, QuadratureTable, l2_error, quadrature_table
from .decomposition import Decomposition, index_set, orient_eigenvectors
from .fiber import (
    DiscreteProblem,
    ExtendedJacobian,
    FiberPoint,
    FiberSolver,
    FiberTrace,
    FiberTraceError,
    continuation_newton,
)
from .inversion import (
    CrossingReport,
    DoublePoint,
    FourSolutions,
    ImageCurve,
    PathSpec,
    Solution,
    find_self_intersection,
    four_solution_construction,
    image_path_2d,
    image_paths,
    parse_path,
    refine_preimage,
    solve_1d,
)
from .linear_solvers import (
    EigenBasis,
    SpdFactorization,
    extended_jacobian_solve,
    rectangle_eigenvalues,
    smallest_eigenpairs,
    spd_solve,
)
from .mesh import Mesh, load_mesh, save_mesh, uniform_rectangle_mesh, validate
from .problems import (
    Nonlinearity,
    ProblemRegistry,
    ProblemSpec,
    atan_nonlinearity,
    linear_nonlinearity,
    load_problem,
    nonconvex_nonlinearity,
    shipped_examples,
)

__all__ = [
    # Mesh
    "Mesh",
    "uniform_rectangle_mesh",
    "validate",
    "load_mesh",
    "save_mesh",
    # Assembly
    "FemSystem",
    "QuadratureTable",
    "quadrature_table",
    "l2_error",
    # Linear algebra
    "SpdFactorization",
    "spd_solve",
    "EigenBasis",
    "smallest_eigenpairs",
    "extended_jacobian_solve",
    "rectangle_eigenvalues",
    # Decomposition
    "Decomposition",
    "index_set",
    "orient_eigenvectors",
    # Problems
    "Nonlinearity",
    "ProblemSpec",
    "ProblemRegistry",
    "atan_nonlinearity",
    "nonconvex_nonlinearity",
    "linear_nonlinearity",
    "load_problem",
    "shipped_examples",
    # Fiber
    "DiscreteProblem",
    "ExtendedJacobian",
    "FiberPoint",
    "FiberTrace",
    "FiberTraceError",
    "FiberSolver",
    "continuation_newton",
    # Inversion
    "PathSpec",
    "parse_path",
    "Solution",
    "CrossingReport",
    "ImageCurve",
    "DoublePoint",
    "FourSolutions",
    "solve_1d",
    "image_path_2d",
    "image_paths",
    "find_self_intersection",
    "refine_preimage",
    "four_solution_construction",
]
