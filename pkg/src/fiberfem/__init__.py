"""FiberFEM - multiple solutions of semilinear Dirichlet problems by the fiber method."""

__version__ = "1.0.0"
