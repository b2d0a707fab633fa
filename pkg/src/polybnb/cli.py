"""Command-line front end: solve, single-bound, oracle, and check modes.

Results go to standard output (and, for solves, a trace CSV); every
diagnostic goes to standard error, so output can be piped or diffed.  All
numbers are printed with 17 significant digits and reruns are
byte-identical: nothing in the pipeline is randomized.

Exit codes: 0 success, 1 problem/flag parse error, 2 solver failure,
3 certified infeasibility.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional, Sequence

from .bnb import (
    BnBConfig,
    BnBResult,
    BnBSolverError,
    GlobalInfeasibleError,
    recommended_loops,
    run_modified_bnb,
)
from .oracle import check_point, grid_minimize
from .problem import (
    GPOProblem,
    HyperRectangle,
    ParseError,
    initial_box,
    normalize,
    parse_problem_file,
)
from .relaxation import GLBOptions, GLBStatus, glb_B_k
from .sdp import SDPOptions

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_SOLVER = 2
EXIT_INFEASIBLE = 3


class _CLIError(Exception):
    """Flag or input problem that maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # argparse would sys.exit(2); we want code 1
        raise _CLIError(message)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _add_problem_arg(sp) -> None:
    sp.add_argument("problem", help="path to a problem file")


def _add_sdp_flags(sp) -> None:
    sp.add_argument("--gap-tol", type=float, default=None, help="duality gap tolerance")
    sp.add_argument("--psd-tol", type=float, default=None, help="eigenvalue tolerance")
    sp.add_argument("--max-iter", type=int, default=None, help="interior-point iteration cap")


def _sdp_options(args) -> SDPOptions:
    kwargs = {}
    if args.gap_tol is not None:
        kwargs["gap_tol"] = args.gap_tol
    if args.psd_tol is not None:
        kwargs["psd_tol"] = args.psd_tol
    if args.max_iter is not None:
        kwargs["max_iter"] = args.max_iter
    return SDPOptions(**kwargs)


def build_parser() -> _Parser:
    parser = _Parser(prog="polybnb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)

    solve = sub.add_parser("solve", help="branch-and-bound global minimization")
    _add_problem_arg(solve)
    solve.add_argument("--k", type=int, required=True, help="relaxation order")
    solve.add_argument("--eta", type=float, default=1e-2, help="edge tolerance")
    solve.add_argument(
        "--loops",
        type=int,
        default=None,
        help="iteration count l (default: the eta-resolution formula)",
    )
    solve.add_argument("--radius", type=float, default=0.0, help="outer box radius when the file declares none")
    solve.add_argument("--trace", default=None, help="write the per-iteration trace CSV here")
    _add_sdp_flags(solve)

    glb = sub.add_parser("glb", help="single lower bound on the declared box")
    _add_problem_arg(glb)
    glb.add_argument("--k", type=int, required=True, help="relaxation order")
    glb.add_argument("--radius", type=float, default=0.0, help="outer box radius when the file declares none")
    _add_sdp_flags(glb)

    oracle = sub.add_parser("oracle", help="brute-force grid minimization")
    _add_problem_arg(oracle)
    oracle.add_argument("--grid", type=int, default=201, help="points per axis")
    oracle.add_argument("--radius", type=float, default=0.0, help="outer box radius when the file declares none")

    check = sub.add_parser("check", help="evaluate all constraints at a point")
    _add_problem_arg(check)
    check.add_argument("--point", required=True, help="comma-separated coordinates")
    check.add_argument("--delta", type=float, default=1e-6, help="feasibility tolerance")
    return parser


def write_trace_csv(path: str, result: BnBResult, nvars: int) -> None:
    cols = ["m", "branch_id", "lambda_m", "lambda_star", "longest_edge", "volume"]
    cols += [f"center_{i + 1}" for i in range(nvars)]
    cols += ["f_center", "ineq_violation_sum", "eq_violation_sum", "gap"]
    lines = [",".join(cols)]
    for row in result.trace:
        vals = [str(row.m), str(row.branch_id), _fmt(row.lambda_m), _fmt(row.lambda_star),
                _fmt(row.longest_edge), _fmt(row.volume)]
        vals += [_fmt(c) for c in row.center]
        vals += [_fmt(row.f_center), _fmt(row.ineq_violation_sum),
                 _fmt(row.eq_violation_sum), _fmt(row.gap)]
        lines.append(",".join(vals))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_solve(args) -> int:
    problem = parse_problem_file(args.problem)
    p = normalize(problem)
    box = initial_box(problem, args.radius)
    loops = args.loops
    if loops is None:
        loops = recommended_loops(box, args.eta)
        print(f"loops not given; using l = {loops}", file=sys.stderr)
    cfg = BnBConfig(k=args.k, eta=args.eta, loops=loops, box=box, sdp=_sdp_options(args))
    result = run_modified_bnb(p, cfg)
    if args.trace:
        write_trace_csv(args.trace, result, p.nvars)
    print("lambda_star:", _fmt(result.lambda_star))
    print("x:", " ".join(_fmt(v) for v in result.x))
    print("f_x:", _fmt(result.objective_value))
    print("k:", result.k)
    print("loops:", loops)
    print("solver_failures:", result.solver_failures)
    return EXIT_OK


def _cmd_glb(args) -> int:
    problem = parse_problem_file(args.problem)
    p = normalize(problem)
    box = initial_box(problem, args.radius)
    res = glb_B_k(p, box, args.k, GLBOptions(sdp=_sdp_options(args)))
    if res.status is GLBStatus.SOLVER_FAILURE:
        print(f"solver failure: {res.message}", file=sys.stderr)
        return EXIT_SOLVER
    print("status:", res.status.value)
    if res.status is GLBStatus.BOX_INFEASIBLE:
        print("the box contains no feasible point (certified)", file=sys.stderr)
        return EXIT_INFEASIBLE
    print("bound:", _fmt(res.bound))
    if res.moment_bound is not None:
        print("moment_bound:", _fmt(res.moment_bound))
    print("k:", res.k)
    print("iterations:", res.iterations)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    problem = parse_problem_file(args.problem)
    p = normalize(problem)
    box = initial_box(problem, args.radius)
    res = grid_minimize(p, box, args.grid)
    print("points_per_axis:", res.points_per_axis)
    print("feasible_points:", res.feasible_count)
    if not res.found:
        print("no feasible grid point")
        return EXIT_OK
    print("best_objective:", _fmt(res.best_objective))
    print("best_point:", " ".join(_fmt(v) for v in res.best_point))
    return EXIT_OK


def _cmd_check(args) -> int:
    problem = parse_problem_file(args.problem)
    try:
        point = [float(tok) for tok in args.point.split(",")]
    except ValueError:
        raise _CLIError(f"--point must be comma-separated numbers, got {args.point!r}")
    report = check_point(problem, point, args.delta)
    print("f:", _fmt(report.objective_value))
    for i, v in enumerate(report.inequalities):
        print(f"inequality_{i + 1}:", _fmt(v))
    for j, v in enumerate(report.equalities):
        print(f"equality_{j + 1}:", _fmt(v))
    for i, v in enumerate(report.box_terms):
        print(f"box_{i + 1}:", _fmt(v))
    print("result:", "pass" if report.passed else "fail")
    for msg in report.failures:
        print("violated", msg, file=sys.stderr)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.mode == "solve":
            return _cmd_solve(args)
        if args.mode == "glb":
            return _cmd_glb(args)
        if args.mode == "oracle":
            return _cmd_oracle(args)
        return _cmd_check(args)
    except (_CLIError, ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GlobalInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BnBSolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
