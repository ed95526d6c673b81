"""First-order solvers for difference-of-convex objectives ``g - h + phi``.

Submodules
----------
core         problem bundle, traces, prox and projection primitives
solvers      subgradient, backtracking, proximal, Frank-Wolfe and CCCP methods
diagnostics  descent and rate checks, slope fits, curvature and smoothness probes
problems     best subset, Tukey regression, shape from shading, mixture likelihood, toys
data         synthetic data, PGM and CSV I/O
cli          the ``dcsolve`` command
"""

from .core import (
    INFEASIBLE,
    DcProblem,
    SolverConfig,
    SolveTrace,
    Status,
    UsageError,
    dc_gradient,
    eval_objective,
)
from .kernels import BACKEND
from .solvers import CccpConfig, backtracking_gd, cccp, frank_wolfe_dc, prox_dc, solve, subgradient_dc

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "INFEASIBLE",
    "CccpConfig",
    "DcProblem",
    "SolverConfig",
    "SolveTrace",
    "Status",
    "UsageError",
    "backtracking_gd",
    "cccp",
    "dc_gradient",
    "eval_objective",
    "frank_wolfe_dc",
    "prox_dc",
    "solve",
    "subgradient_dc",
]
