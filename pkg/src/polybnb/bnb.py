"""Branch-and-bound drivers over hyper-rectangles.

Two drivers share the bisection primitive.  The ideal one keeps a single box
and always descends into the child with the smaller lower bound; with an
exact bound oracle its box shrinks geometrically around a global minimizer
(longest edge <= initial * 2^(-floor(m/n)) after m steps) but the oracle is
exactly the quantity we are trying to compute.  The practical driver
replaces the oracle with the order-k certified bound and keeps the whole
tree, selecting at iteration m among near-optimal branches

    lambda(j) <= lambda(j*) + m * eta / (1 + loops),    j* = argmin lambda(j)

the one of smallest volume.  The widening window trims ties aggressively at
the start and tolerates a slack of at most eta by the final loop, which is
what makes the returned centroid an approximate minimizer rather than just
a bound witness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .polynomials import Polynomial
from .problem import HyperRectangle, NormalizedProblem
from .relaxation import GLBOptions, GLBStatus, glb_B_k
from .sdp import SDPOptions

__all__ = [
    "GlobalInfeasibleError",
    "BnBSolverError",
    "Branch",
    "BnBConfig",
    "TraceRow",
    "BnBResult",
    "bisect_box",
    "select_branch",
    "run_modified_bnb",
    "run_ideal_bnb",
    "lipschitz_tolerance",
    "recommended_loops",
]

logger = logging.getLogger(__name__)


class GlobalInfeasibleError(Exception):
    """Every live branch carries an order-k emptiness certificate."""


class BnBSolverError(Exception):
    """The bound subroutine failed where the driver cannot recover."""


@dataclass(frozen=True)
class Branch:
    """A live node: a box with its certified lower bound.

    ``bound`` is clipped from below to the parent's bound, so bounds are
    exactly monotone along any root-to-leaf path; ``raw_bound`` keeps the
    unclipped value for diagnostics.  Infeasible or failed children carry
    bound = +inf and are never selected.
    """

    id: int
    box: HyperRectangle
    bound: float
    raw_bound: float
    parent: int
    depth: int
    failed: bool = False


@dataclass(frozen=True)
class BnBConfig:
    k: int
    eta: float
    loops: int
    box: HyperRectangle
    sdp: SDPOptions = field(default_factory=SDPOptions)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.loops < 1:
            raise ValueError("loop count must be at least 1")


@dataclass(frozen=True)
class TraceRow:
    """Per-iteration record of the branched box and point diagnostics.

    ``lambda_m`` is the selected branch's bound at selection time;
    ``lambda_star`` is min_j lambda(j) after the children replace it, the
    certified global lower bound at the end of iteration m.  The geometric
    columns describe the selected box before splitting, the violation sums
    use the problem's declared inequalities and equalities at its center.
    """

    m: int
    branch_id: int
    lambda_m: float
    lambda_star: float
    longest_edge: float
    volume: float
    center: Tuple[float, ...]
    f_center: float
    ineq_violation_sum: float
    eq_violation_sum: float
    gap: float


@dataclass
class BnBResult:
    x: np.ndarray
    objective_value: float
    lambda_star: float
    trace: List[TraceRow]
    solver_failures: int
    k: int


def bisect_box(box: HyperRectangle) -> Tuple[HyperRectangle, HyperRectangle]:
    """Split at the midpoint of the longest edge (ties: smallest axis)."""
    _, axis = box.longest_edge()
    mid = 0.5 * (box.lower[axis] + box.upper[axis])
    low = HyperRectangle(
        box.lower, box.upper[:axis] + (mid,) + box.upper[axis + 1 :]
    )
    high = HyperRectangle(
        box.lower[:axis] + (mid,) + box.lower[axis + 1 :], box.upper
    )
    return low, high


def select_branch(branches: Sequence[Branch], m: int, eta: float, loops: int) -> int:
    """Index of the branch to split at iteration m.

    Among branches within the window lambda(j) <= lambda(j*) + m*eta/(1+loops)
    the smallest box (by log-volume, so deep nodes compare reliably) wins;
    remaining ties go to the oldest branch.  Branches at +inf are ineligible.
    """
    best = None
    for br in branches:
        if br.bound == math.inf:
            continue
        if best is None or br.bound < best.bound or (
            br.bound == best.bound and br.id < best.id
        ):
            best = br
    if best is None:
        raise GlobalInfeasibleError(
            "every branch carries an order-k certificate that S is empty "
            "inside it; the feasible set does not meet the initial box"
        )
    window = best.bound + m * eta / (1 + loops)
    chosen_idx = None
    chosen_key = None
    for idx, br in enumerate(branches):
        if br.bound == math.inf or br.bound > window:
            continue
        key = (br.box.log_volume(), br.id)
        if chosen_key is None or key < chosen_key:
            chosen_idx = idx
            chosen_key = key
    return chosen_idx


def _violation_sums(
    p: NormalizedProblem, x: np.ndarray
) -> Tuple[float, float]:
    ineq = 0.0
    for g in p.inequalities[: p.n_original]:
        v = g(x)
        if v < 0:
            ineq -= v
    eq = sum(abs(h(x)) for h in p.equalities)
    return ineq, eq


def run_modified_bnb(
    p: NormalizedProblem,
    cfg: BnBConfig,
    glb_options: Optional[GLBOptions] = None,
) -> BnBResult:
    """Run the windowed branch-and-bound for cfg.loops iterations.

    Each iteration selects a branch, bisects it, evaluates the order-k bound
    on both children, replaces the parent with the lower child and appends
    the upper one.  Returns the centroid of the last-selected box together
    with the full trace.  A bound failure on a child demotes that child to
    +inf with a logged warning; a failure on the root aborts.
    """
    if cfg.box.dim != p.nvars:
        raise ValueError("initial box dimension does not match the problem")
    opts = glb_options or GLBOptions(sdp=cfg.sdp, want_moment_vector=False)

    def bound_of(box: HyperRectangle) -> Tuple[float, bool]:
        r = glb_B_k(p, box, cfg.k, opts)
        if r.status is GLBStatus.SOLVER_FAILURE:
            return math.inf, True
        return r.bound, False

    root_res = glb_B_k(p, cfg.box, cfg.k, opts)
    if root_res.status is GLBStatus.BOX_INFEASIBLE:
        raise GlobalInfeasibleError(
            f"order-{cfg.k} certificate: the feasible set does not meet "
            f"the initial box"
        )
    if root_res.status is GLBStatus.SOLVER_FAILURE:
        raise BnBSolverError(
            f"bound computation failed on the initial box: {root_res.message}"
        )
    branches: List[Branch] = [
        Branch(
            id=1,
            box=cfg.box,
            bound=root_res.bound,
            raw_bound=root_res.bound,
            parent=0,
            depth=0,
        )
    ]

    trace: List[TraceRow] = []
    failures = 0
    last_center: Optional[np.ndarray] = None
    for m in range(1, cfg.loops + 1):
        idx = select_branch(branches, m, cfg.eta, cfg.loops)
        sel = branches[idx]
        edge, _ = sel.box.longest_edge()
        center = sel.box.center()
        last_center = center
        f_center = p.objective(center)
        ineq_sum, eq_sum = _violation_sums(p, center)

        low_box, high_box = bisect_box(sel.box)
        children = []
        for child_box in (low_box, high_box):
            raw, failed = bound_of(child_box)
            if failed:
                failures += 1
                logger.warning(
                    "bound failed on child box %s at iteration %d; "
                    "treating as pruned (+inf)",
                    child_box,
                    m,
                )
            children.append((max(raw, sel.bound), raw, failed))
        (lo_b, lo_raw, lo_fail), (hi_b, hi_raw, hi_fail) = children
        branches[idx] = Branch(
            id=sel.id,
            box=low_box,
            bound=lo_b,
            raw_bound=lo_raw,
            parent=sel.id,
            depth=sel.depth + 1,
            failed=lo_fail,
        )
        branches.append(
            Branch(
                id=m + 1,
                box=high_box,
                bound=hi_b,
                raw_bound=hi_raw,
                parent=sel.id,
                depth=sel.depth + 1,
                failed=hi_fail,
            )
        )
        lambda_star = min(br.bound for br in branches)
        trace.append(
            TraceRow(
                m=m,
                branch_id=sel.id,
                lambda_m=sel.bound,
                lambda_star=lambda_star,
                longest_edge=edge,
                volume=sel.box.volume(),
                center=tuple(center.tolist()),
                f_center=f_center,
                ineq_violation_sum=ineq_sum,
                eq_violation_sum=eq_sum,
                gap=abs(f_center - lambda_star),
            )
        )

    final_lambda = min(br.bound for br in branches)
    if final_lambda == math.inf:
        raise GlobalInfeasibleError(
            "all branches were certified empty during the final iteration"
        )
    return BnBResult(
        x=last_center,
        objective_value=p.objective(last_center),
        lambda_star=final_lambda,
        trace=trace,
        solver_failures=failures,
        k=cfg.k,
    )


def run_ideal_bnb(
    box: HyperRectangle,
    glb: Callable[[HyperRectangle], float],
    iterations: int,
) -> HyperRectangle:
    """Single-box descent: keep the child with the smaller bound (ties: lower).

    With an exact oracle the surviving box always contains a global
    minimizer, and its longest edge after m steps is at most the initial
    one times 2^(-floor(m/n)).
    """
    if iterations < 0:
        raise ValueError("iteration count must be nonnegative")
    for _ in range(iterations):
        low, high = bisect_box(box)
        box = low if glb(low) <= glb(high) else high
    return box


def _gradient_norm_bound(h: Polynomial, box: HyperRectangle) -> float:
    """sqrt(sum_i (sup |dh/dx_i|)^2) over the box, by coefficient bounding."""
    n = h.nvars
    peak = [max(abs(box.lower[j]), abs(box.upper[j])) for j in range(n)]
    total = 0.0
    for i in range(n):
        d = h.partial(i)
        bound_i = 0.0
        for alpha, c in d.items():
            term = abs(c)
            for j, e in enumerate(alpha):
                if e:
                    term *= peak[j] ** e
            bound_i += term
        total += bound_i * bound_i
    return math.sqrt(total)


def lipschitz_tolerance(
    p: NormalizedProblem, box: HyperRectangle, eps: float
) -> float:
    """delta = L * eps with L a gradient-norm bound for f and every g_i.

    A point within eps of a feasible minimizer then satisfies
    |f(x) - f*| <= delta and g_i(x) >= -delta.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    L = _gradient_norm_bound(p.objective, box)
    for g in p.inequalities:
        L = max(L, _gradient_norm_bound(g, box))
    return L * eps


def recommended_loops(box: HyperRectangle, eta: float) -> int:
    """Smallest l with l > n * log2(L * sqrt(n) / eta), L the longest edge.

    After that many loops the selected boxes have been bisected often enough
    that the last-selected box fits inside a ball of radius eta.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    n = box.dim
    L = max(box.edges())
    bound = n * math.log2(L * math.sqrt(n) / eta)
    l = int(math.floor(bound)) + 1
    return max(l, 1)
