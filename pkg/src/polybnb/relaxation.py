"""SOS and moment relaxations of polynomial minimization over a box.

Given f and constraints g_i >= 0 (equalities already split into pairs) and a
hyper-rectangle C = [a, b], the order-k bound B_k is

    p_k* = max lambda  s.t.  f - lambda = sum_i sigma_i g_i + sum_j omega_j w_j

with sigma_i, omega_j sums of squares, w_j = (b_j - x_j)(x_j - a_j) the box
quadratics, g_0 = 1, and every product degree at most k.  Coefficient
matching turns this into one semidefinite program with a PSD Gram block per
generator; its dual is the order-k moment relaxation (minimize f over
pseudo-moment vectors with PSD moment/localizing matrices), so each solve
yields both values and p_k* <= d_k* <= min f on S intersect C.

Before assembly the box is affinely mapped onto [-1, 1]^n; the bound is
invariant under this substitution and conditioning improves markedly.  All
reported quantities are mapped back to original coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .polynomials import Exponent, Polynomial, grlex_key, monomial_basis
from .problem import GPOProblem, HyperRectangle, NormalizedProblem
from .sdp import (
    SDPConstraint,
    SDPOptions,
    SDPProblem,
    SDPSolution,
    SDPStatus,
    solve_sdp,
)

__all__ = [
    "box_polynomials",
    "decompose_box_quadratic",
    "RelaxationLayout",
    "relaxation_layout",
    "build_sos_glb",
    "build_moment_glb",
    "GLBStatus",
    "GLBOptions",
    "GLBResult",
    "glb_B_k",
    "solve_moment_glb",
    "certificate_polynomial",
    "certificate_residual_poly",
    "moment_backmap",
    "add_ball_constraint",
]


def box_polynomials(box: HyperRectangle) -> List[Polynomial]:
    """The box quadratics w_j(x) = (b_j - x_j)(x_j - a_j), nonnegative on the box."""
    n = box.dim
    out = []
    for j in range(n):
        a, b = box.lower[j], box.upper[j]
        xj = Polynomial.variable(j, n)
        out.append((b - xj) * (xj - a))
    return out


def decompose_box_quadratic(a: float, b: float, c: float, d: float) -> Tuple[float, float, float]:
    """Write (x-a)(b-x) = alpha*(x-c)(d-x) + beta*(x+gamma)^2 with alpha, beta >= 0.

    Requires a <= c < d <= b.  This is the one-dimensional fact behind box
    nesting monotonicity: the outer box quadratic lies in the module
    generated by the inner one.  After shifting z = x - a, with p^2 = c - a,
    q^2 = d - c, r^2 = b - d, A = p^2(p^2+q^2), B = r^2(q^2+r^2), and
    s = sqrt(A B), the generic solution is

        gamma_z = -A (b-a) / (A + s),  alpha = beta + 1,
        beta    = ((2p^2+q^2) s + (q^2+2r^2) A) (A + s) / (A q^4 (b-a)).

    The beta formula is the rationalized form of A / (gamma_z^2 - A): the
    difference of squares (2p^2+q^2)^2 A B - (q^2+2r^2)^2 A^2 collapses to
    A q^4 (r^2-p^2)(b-a), so every remaining factor is nonnegative and beta
    is computed without cancellation even when the inner interval is thin
    and beta grows like q^(-4).  At r^2 = p^2 it reduces to the symmetric
    forms gamma_z = -(2p^2+q^2)/2, beta = 4p^2(p^2+q^2)/q^4.  The boundary
    cases c = a and/or d = b have their own closed forms (the d = b case by
    reflecting z -> b - z).
    """
    a, b, c, d = float(a), float(b), float(c), float(d)
    if not (a <= c < d <= b):
        raise ValueError(f"need a <= c < d <= b, got a={a}, c={c}, d={d}, b={b}")
    bb = b - a
    p2 = c - a
    q2 = d - c
    r2 = b - d

    if p2 == 0.0 and r2 == 0.0:
        return 1.0, 0.0, 0.0
    if p2 == 0.0:
        alpha = bb / (d - a)
        return alpha, alpha - 1.0, -a
    if r2 == 0.0:
        alpha = bb / (bb - p2)
        return alpha, alpha - 1.0, -b

    A = p2 * (p2 + q2)
    if r2 == p2:
        gamma_z = -(2.0 * p2 + q2) / 2.0
        beta = 4.0 * p2 * (p2 + q2) / (q2 * q2)
    else:
        B = r2 * (q2 + r2)
        s = math.sqrt(A * B)
        gamma_z = -A * bb / (A + s)
        beta = ((2.0 * p2 + q2) * s + (q2 + 2.0 * r2) * A) * (A + s) / (A * q2 * q2 * bb)
    return beta + 1.0, beta, gamma_z - a


# ---------------------------------------------------------------------------
# layout: scaled coordinates, generators, bases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationLayout:
    """Everything both relaxations share for a given (problem, box, k)."""

    nvars: int
    k: int
    box: HyperRectangle
    offset: Tuple[float, ...]              # box center; x = offset + half * u
    half: Tuple[float, ...]                # box half-widths
    objective_scaled: Polynomial           # f in u-coordinates
    generators: Tuple[Polynomial, ...]     # scaled: [1, g_1.., w_1..w_n]
    generator_names: Tuple[str, ...]
    multiplier_degrees: Tuple[int, ...]    # d_i = floor((k - deg g_i)/2)
    bases: Tuple[Tuple[Exponent, ...], ...]
    monomials: Tuple[Exponent, ...]        # constraint rows, grlex, |alpha| <= k
    objective_norm: float                  # rhs was divided by this

    @property
    def block_dims(self) -> Tuple[int, ...]:
        return tuple(len(b) for b in self.bases)


def _generator_name(idx: int, p: NormalizedProblem) -> str:
    if idx < p.n_original:
        return f"inequality {idx + 1}"
    pair = idx - p.n_original
    sign = "+" if pair % 2 == 0 else "-"
    return f"equality {pair // 2 + 1} ({sign})"


def relaxation_layout(p: NormalizedProblem, box: HyperRectangle, k: int) -> RelaxationLayout:
    n = p.nvars
    if box.dim != n:
        raise ValueError("box dimension does not match the problem")
    if k < 2:
        raise ValueError("relaxation order k must be at least 2")
    if p.objective.degree > k:
        raise ValueError(
            f"objective degree {p.objective.degree} exceeds relaxation order k={k}"
        )
    offset = tuple(box.center().tolist())
    half = tuple((e / 2.0 for e in box.edges().tolist()))

    gens: List[Polynomial] = [Polynomial.constant(n, 1.0)]
    names: List[str] = ["1"]
    f_u = p.objective.affine_substitute(offset, half)
    for idx, g in enumerate(p.inequalities):
        if g.is_zero():
            continue
        if g.degree > k:
            raise ValueError(
                f"{_generator_name(idx, p)} has degree {g.degree}, "
                f"which exceeds relaxation order k={k}"
            )
        gens.append(g.affine_substitute(offset, half))
        names.append(_generator_name(idx, p))
    for j in range(n):
        uj = Polynomial.variable(j, n)
        gens.append(Polynomial.constant(n, 1.0) - uj * uj)
        names.append(f"box quadratic {j + 1}")

    degrees = tuple((k - g.degree) // 2 for g in gens)
    bases = tuple(monomial_basis(n, d) for d in degrees)
    monomials = monomial_basis(n, k)
    obj_norm = max(1.0, max((abs(c) for c in f_u.terms.values()), default=0.0))
    return RelaxationLayout(
        nvars=n,
        k=k,
        box=box,
        offset=offset,
        half=half,
        objective_scaled=f_u,
        generators=tuple(gens),
        generator_names=tuple(names),
        multiplier_degrees=degrees,
        bases=bases,
        monomials=monomials,
        objective_norm=obj_norm,
    )


# ---------------------------------------------------------------------------
# SDP assembly: two independent routes sharing the layout
# ---------------------------------------------------------------------------


def _sos_sdp(layout: RelaxationLayout) -> SDPProblem:
    """max lambda s.t. coefficient matching; free variable 0 is lambda.

    One equality row per monomial |alpha| <= k; Gram block per generator.
    Posed as min -lambda for the solver.
    """
    index = {alpha: r for r, alpha in enumerate(layout.monomials)}
    rows: List[Dict[int, List[Tuple[int, int, float]]]] = [
        {} for _ in layout.monomials
    ]
    for bidx, (gen, basis) in enumerate(zip(layout.generators, layout.bases)):
        for i, beta in enumerate(basis):
            for j in range(i, len(basis)):
                gamma = basis[j]
                bg = tuple(x + y for x, y in zip(beta, gamma))
                for delta, coef in gen.items():
                    alpha = tuple(x + y for x, y in zip(bg, delta))
                    r = index[alpha]
                    rows[r].setdefault(bidx, []).append((i, j, coef))
    s = layout.objective_norm
    zero = (0,) * layout.nvars
    constraints = []
    for r, alpha in enumerate(layout.monomials):
        free = {0: 1.0} if alpha == zero else {}
        constraints.append(
            SDPConstraint(
                blocks=rows[r],
                free=free,
                rhs=layout.objective_scaled.coefficient(alpha) / s,
            )
        )
    return SDPProblem(
        block_dims=layout.block_dims,
        n_free=1,
        block_costs={},
        free_costs={0: -1.0},
        constraints=tuple(constraints),
    )


def build_sos_glb(p: NormalizedProblem, box: HyperRectangle, k: int) -> SDPProblem:
    """Order-k SOS lower-bound SDP for min f over S intersect box."""
    return _sos_sdp(relaxation_layout(p, box, k))


def _moment_sdp(layout: RelaxationLayout) -> SDPProblem:
    """min sum f_alpha y_alpha s.t. y_0 = 1 and localizing matrices PSD.

    Free variable r is the pseudo-moment y of layout.monomials[r]; block i is
    the localizing matrix of generator i (i = 0 gives the moment matrix).
    """
    index = {alpha: r for r, alpha in enumerate(layout.monomials)}
    s = layout.objective_norm
    constraints = [
        SDPConstraint(blocks={}, free={0: 1.0}, rhs=1.0)  # y_0 = 1
    ]
    for bidx, (gen, basis) in enumerate(zip(layout.generators, layout.bases)):
        for i, beta in enumerate(basis):
            for j in range(i, len(basis)):
                gamma = basis[j]
                bg = tuple(x + y for x, y in zip(beta, gamma))
                mirror = 1.0 if i == j else 2.0
                free: Dict[int, float] = {}
                for delta, coef in gen.items():
                    alpha = tuple(x + y for x, y in zip(bg, delta))
                    r = index[alpha]
                    free[r] = free.get(r, 0.0) - mirror * coef
                constraints.append(
                    SDPConstraint(blocks={bidx: [(i, j, 1.0)]}, free=free, rhs=0.0)
                )
    free_costs = {
        index[alpha]: coef / s for alpha, coef in layout.objective_scaled.items()
    }
    return SDPProblem(
        block_dims=layout.block_dims,
        n_free=len(layout.monomials),
        block_costs={},
        free_costs=free_costs,
        constraints=tuple(constraints),
    )


def build_moment_glb(p: NormalizedProblem, box: HyperRectangle, k: int) -> SDPProblem:
    """Order-k moment lower-bound SDP, the dual route to build_sos_glb."""
    return _moment_sdp(relaxation_layout(p, box, k))


# ---------------------------------------------------------------------------
# B_k: solve, classify, report
# ---------------------------------------------------------------------------


class GLBStatus(enum.Enum):
    BOUND = "Bound"
    BOX_INFEASIBLE = "BoxInfeasible"
    SOLVER_FAILURE = "SolverFailure"


@dataclass(frozen=True)
class GLBOptions:
    sdp: SDPOptions = field(default_factory=SDPOptions)
    want_moment_vector: bool = True


@dataclass
class GLBResult:
    status: GLBStatus
    bound: Optional[float]                 # lambda; +inf on BoxInfeasible
    k: int
    box: HyperRectangle
    route: str                             # "sos" or "moment"
    sdp_status: SDPStatus
    iterations: int
    moment_bound: Optional[float] = None   # d_k* read off the SOS duals
    moment_vector: Optional[np.ndarray] = None  # original coordinates
    gram_blocks: Optional[List[np.ndarray]] = None
    layout: Optional[RelaxationLayout] = None
    certificate: Optional[dict] = None
    message: str = ""


def moment_backmap(layout: RelaxationLayout, z_scaled: np.ndarray) -> np.ndarray:
    """Pseudo-moments of x from pseudo-moments of u, via x = offset + half*u."""
    index = {alpha: r for r, alpha in enumerate(layout.monomials)}
    out = np.zeros(len(layout.monomials))
    for r, alpha in enumerate(layout.monomials):
        mono_in_u = Polynomial.monomial(alpha).affine_substitute(
            layout.offset, layout.half
        )
        out[r] = sum(c * z_scaled[index[beta]] for beta, c in mono_in_u.items())
    return out


def glb_B_k(
    p: NormalizedProblem,
    box: HyperRectangle,
    k: int,
    opts: GLBOptions | None = None,
) -> GLBResult:
    """The bound subroutine B_k: certified SOS lower bound on min f over S cap box.

    The moment value and (optionally) the truncated moment vector come from
    the dual multipliers of the same solve; build_moment_glb remains an
    independent route for cross-checking.
    """
    opts = opts or GLBOptions()
    layout = relaxation_layout(p, box, k)
    sdp = _sos_sdp(layout)
    sol = solve_sdp(sdp, opts.sdp)
    s = layout.objective_norm

    if sol.status is SDPStatus.OPTIMAL:
        bound = -s * sol.primal_objective
        moment_bound = -s * sol.dual_objective
        moment_vector = None
        if opts.want_moment_vector and sol.y is not None:
            moment_vector = moment_backmap(layout, -sol.y)
        return GLBResult(
            status=GLBStatus.BOUND,
            bound=bound,
            k=k,
            box=box,
            route="sos",
            sdp_status=sol.status,
            iterations=sol.iterations,
            moment_bound=moment_bound,
            moment_vector=moment_vector,
            gram_blocks=[s * X for X in sol.blocks],
            layout=layout,
        )
    if sol.status is SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED:
        # lambda can grow without bound, i.e. -1 lies in the degree-k module:
        # an order-k certificate that S cap box is empty.
        return GLBResult(
            status=GLBStatus.BOX_INFEASIBLE,
            bound=math.inf,
            k=k,
            box=box,
            route="sos",
            sdp_status=sol.status,
            iterations=sol.iterations,
            layout=layout,
            certificate=sol.certificate,
            message="order-k emptiness certificate found",
        )
    if sol.status is SDPStatus.PRIMAL_INFEASIBLE:
        # The certificate problem can only lose feasibility when the box
        # grows (nesting monotonicity), and lowering lambda always restores
        # it, so this status is a numerical artifact of weakly-feasible
        # instances rather than usable information.  Report it as a failure
        # so the driver does not mistake it for a bound.
        return GLBResult(
            status=GLBStatus.SOLVER_FAILURE,
            bound=None,
            k=k,
            box=box,
            route="sos",
            sdp_status=sol.status,
            iterations=sol.iterations,
            layout=layout,
            certificate=sol.certificate,
            message="the order-k certificate problem was reported infeasible",
        )
    return GLBResult(
        status=GLBStatus.SOLVER_FAILURE,
        bound=None,
        k=k,
        box=box,
        route="sos",
        sdp_status=sol.status,
        iterations=sol.iterations,
        layout=layout,
        message=sol.message or f"SDP ended with status {sol.status.value}",
    )


def solve_moment_glb(
    p: NormalizedProblem,
    box: HyperRectangle,
    k: int,
    opts: GLBOptions | None = None,
) -> GLBResult:
    """Independent moment-route bound d_k* (also a valid lower bound)."""
    opts = opts or GLBOptions()
    layout = relaxation_layout(p, box, k)
    sdp = _moment_sdp(layout)
    sol = solve_sdp(sdp, opts.sdp)
    s = layout.objective_norm

    if sol.status is SDPStatus.OPTIMAL:
        value = s * sol.primal_objective
        moment_vector = None
        if opts.want_moment_vector and sol.free is not None:
            moment_vector = moment_backmap(layout, sol.free)
        return GLBResult(
            status=GLBStatus.BOUND,
            bound=value,
            k=k,
            box=box,
            route="moment",
            sdp_status=sol.status,
            iterations=sol.iterations,
            moment_bound=value,
            moment_vector=moment_vector,
            gram_blocks=list(sol.blocks) if sol.blocks is not None else None,
            layout=layout,
        )
    if sol.status is SDPStatus.PRIMAL_INFEASIBLE:
        # no pseudo-moment vector with y_0 = 1: dual form of the emptiness
        # certificate above.
        return GLBResult(
            status=GLBStatus.BOX_INFEASIBLE,
            bound=math.inf,
            k=k,
            box=box,
            route="moment",
            sdp_status=sol.status,
            iterations=sol.iterations,
            layout=layout,
            certificate=sol.certificate,
            message="moment relaxation infeasible: box certified empty",
        )
    if sol.status is SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED:
        return GLBResult(
            status=GLBStatus.BOUND,
            bound=-math.inf,
            k=k,
            box=box,
            route="moment",
            sdp_status=sol.status,
            iterations=sol.iterations,
            layout=layout,
            certificate=sol.certificate,
            message="moment relaxation unbounded below at this order",
        )
    return GLBResult(
        status=GLBStatus.SOLVER_FAILURE,
        bound=None,
        k=k,
        box=box,
        route="moment",
        sdp_status=sol.status,
        iterations=sol.iterations,
        layout=layout,
        message=sol.message or f"SDP ended with status {sol.status.value}",
    )


# ---------------------------------------------------------------------------
# certificate reconstruction
# ---------------------------------------------------------------------------


def certificate_polynomial(result: GLBResult) -> Polynomial:
    """Rebuild sum_i Z^T Q_i Z * g_i + lambda from the Gram blocks (u-coords)."""
    if result.gram_blocks is None or result.layout is None or result.bound is None:
        raise ValueError("result carries no certificate data")
    if result.route != "sos":
        raise ValueError("certificate reconstruction applies to the SOS route")
    layout = result.layout
    total = Polynomial.constant(layout.nvars, result.bound)
    for gen, basis, Q in zip(layout.generators, layout.bases, result.gram_blocks):
        sigma_terms: Dict[Exponent, float] = {}
        for i, beta in enumerate(basis):
            for j, gamma in enumerate(basis):
                bg = tuple(x + y for x, y in zip(beta, gamma))
                sigma_terms[bg] = sigma_terms.get(bg, 0.0) + Q[i, j]
        total = total + Polynomial(layout.nvars, sigma_terms) * gen
    return total


def certificate_residual_poly(result: GLBResult) -> float:
    """Max |coefficient| of (reconstructed certificate) - f, in u-coordinates."""
    diff = certificate_polynomial(result) - result.layout.objective_scaled
    if diff.is_zero():
        return 0.0
    return max(abs(c) for c in diff.terms.values())


def add_ball_constraint(p: NormalizedProblem, radius: float) -> NormalizedProblem:
    """Append R^2 - sum x_i^2 >= 0; preprocessing for box-free hierarchy use."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = p.nvars
    ball = Polynomial.constant(n, radius * radius)
    for i in range(n):
        xi = Polynomial.variable(i, n)
        ball = ball - xi * xi
    return replace(
        p,
        inequalities=p.inequalities[: p.n_original]
        + (ball,)
        + p.inequalities[p.n_original :],
        n_original=p.n_original + 1,
    )
