"""Physarum dynamics solver for weighted basis pursuit.

Backward Euler in pseudo-time with an inexact Newton-Krylov inner solve,
Lyapunov monitoring, benchmark generators and a simplex reference oracle.
"""

from .core import (
    BasisPursuitProblem,
    InputError,
    SingularSystemError,
    TransportState,
    apply_G,
    assemble_S,
    compute_flux,
    solve_potential,
)
from .dynamics import LyapunovBreakdown, lyapunov, optimality_residuals
from .generators import (
    GraphSpec,
    RandomBpSpec,
    generate_graph_problem,
    generate_random_bp,
    paper_suite,
    path_graph,
)
from .krylov import LinearSolverHandle
from .newton import SolverConfig, newton_solve
from .oracle import LpSolution, lp_solve_l1
from .stepper import StepperConfig, StepRecord, run

__version__ = "0.1.0"

__all__ = [
    "BasisPursuitProblem", "TransportState", "InputError", "SingularSystemError",
    "apply_G", "assemble_S", "solve_potential", "compute_flux",
    "LyapunovBreakdown", "lyapunov", "optimality_residuals",
    "RandomBpSpec", "GraphSpec", "generate_random_bp", "generate_graph_problem",
    "paper_suite", "path_graph",
    "LinearSolverHandle", "SolverConfig", "newton_solve",
    "LpSolution", "lp_solve_l1",
    "StepperConfig", "StepRecord", "run",
]
