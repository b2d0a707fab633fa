"""Certified global minimization of polynomials over box-constrained sets.

The pipeline: parse a problem (``problem``), compute certified lower bounds
on sub-boxes via weighted sum-of-squares relaxations (``relaxation``) solved
by an embedded semidefinite interior-point method (``sdp``), and drive a
branch-and-bound refinement that returns a near-optimal point (``bnb``).
``oracle`` provides an independent brute-force grid reference for testing.
"""

from .bnb import (
    BnBConfig,
    BnBResult,
    BnBSolverError,
    GlobalInfeasibleError,
    TraceRow,
    bisect_box,
    recommended_loops,
    run_modified_bnb,
)
from .oracle import CheckReport, GridResult, check_point, grid_minimize
from .polynomials import Polynomial
from .problem import (
    GPOProblem,
    HyperRectangle,
    NormalizedProblem,
    ParseError,
    initial_box,
    normalize,
    parse_problem,
    parse_problem_file,
    problem_to_text,
)
from .relaxation import GLBOptions, GLBResult, GLBStatus, glb_B_k
from .sdp import (
    SDPConstraint,
    SDPOptions,
    SDPProblem,
    SDPSolution,
    SDPStatus,
    solve_sdp,
)

__all__ = [
    "BnBConfig",
    "BnBResult",
    "BnBSolverError",
    "CheckReport",
    "GLBOptions",
    "GLBResult",
    "GLBStatus",
    "GPOProblem",
    "GlobalInfeasibleError",
    "GridResult",
    "HyperRectangle",
    "NormalizedProblem",
    "ParseError",
    "Polynomial",
    "SDPConstraint",
    "SDPOptions",
    "SDPProblem",
    "SDPSolution",
    "SDPStatus",
    "TraceRow",
    "bisect_box",
    "check_point",
    "glb_B_k",
    "grid_minimize",
    "initial_box",
    "normalize",
    "parse_problem",
    "parse_problem_file",
    "problem_to_text",
    "recommended_loops",
    "run_modified_bnb",
    "solve_sdp",
]

__version__ = "0.1.0"
