"""ocstab: sensitivity of the optimal value function of convex linear-quadratic control problems.

The problem is
    minimise  g(x(1)) + int_0^1 L(t, x, u, theta) dt
    s.t.      x' = A x + B u + C theta,  x(0) = alpha,  u in U,
and the package computes V(alpha, theta), its subdifferential and its
singular subdifferential.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    FeasibilityError,
    NonConvergence,
    NotOptimal,
    OcstabError,
    OutsideRegion,
    ProblemFileError,
    StepSingular,
)
from .grid import GridFn, TimeGrid, Trajectory  # noqa: E402
from .problem import Box, CostSpec, L2Ball, OcProblem, Parameter, SystemMatrices, Unconstrained  # noqa: E402
from .solver import SolveOptions, SolveResult, solve  # noqa: E402
from .subdiff import compute_singular_subdifferential, compute_subdifferential  # noqa: E402

__all__ = [
    "Box",
    "CostSpec",
    "FeasibilityError",
    "GridFn",
    "L2Ball",
    "NonConvergence",
    "NotOptimal",
    "OcProblem",
    "OcstabError",
    "OutsideRegion",
    "Parameter",
    "ProblemFileError",
    "SolveOptions",
    "SolveResult",
    "StepSingular",
    "SystemMatrices",
    "TimeGrid",
    "Trajectory",
    "Unconstrained",
    "compute_singular_subdifferential",
    "compute_subdifferential",
    "solve",
]
