"""Tests for the SOS/moment relaxation layer and the B_k subroutine."""

import math
from dataclasses import replace

import numpy as np
import pytest

from polybnb.oracle import grid_minimize
from polybnb.polynomials import Polynomial
from polybnb.problem import HyperRectangle, initial_box, normalize, parse_problem
from polybnb.relaxation import (
    GLBOptions,
    GLBStatus,
    add_ball_constraint,
    box_polynomials,
    certificate_residual_poly,
    decompose_box_quadratic,
    glb_B_k,
    relaxation_layout,
    solve_moment_glb,
)

from conftest import random_polynomial


def _normalized(text):
    p = parse_problem(text)
    return normalize(p), initial_box(p)


# ---------------------------------------------------------------------------
# box polynomials
# ---------------------------------------------------------------------------


def test_box_polynomials_unit_interval():
    """w(x) on [0, 1] is x - x^2."""
    (w,) = box_polynomials(HyperRectangle((0.0,), (1.0,)))
    assert w.terms == {(1,): 1.0, (2,): -1.0}


def test_box_polynomials_symmetric_and_shifted():
    """[-1, 1] gives 1 - x^2; [1, 3] gives -x^2 + 4x - 3."""
    (w,) = box_polynomials(HyperRectangle((-1.0,), (1.0,)))
    assert w.terms == {(0,): 1.0, (2,): -1.0}
    (w,) = box_polynomials(HyperRectangle((1.0,), (3.0,)))
    assert w.terms == {(0,): -3.0, (1,): 4.0, (2,): -1.0}


def test_box_polynomials_sign_pattern():
    """Each w_j is nonnegative exactly on the box slice, per coordinate."""
    box = HyperRectangle((-2.0, 1.0), (0.5, 4.0))
    w1, w2 = box_polynomials(box)
    assert w1(np.array([-1.0, 0.0])) > 0
    assert w1(np.array([1.0, 0.0])) < 0
    assert w1(np.array([-2.0, 0.0])) == pytest.approx(0.0)
    assert w2(np.array([0.0, 2.0])) > 0
    assert w2(np.array([0.0, 0.0])) < 0


# ---------------------------------------------------------------------------
# nested-interval decomposition of box quadratics
# ---------------------------------------------------------------------------


def _decomposition_residual(a, b, c, d, alpha, beta, gamma):
    """Max coefficient error of (x-a)(b-x) - alpha (x-c)(d-x) - beta (x+gamma)^2."""
    lhs = np.array([-1.0, a + b, -a * b])
    rhs = alpha * np.array([-1.0, c + d, -c * d])
    rhs = rhs + beta * np.array([1.0, 2.0 * gamma, gamma * gamma])
    return float(np.max(np.abs(lhs - rhs)))


def test_decompose_worked_example():
    """(0,4,1,3) decomposes with alpha=4, beta=3, gamma=-2."""
    alpha, beta, gamma = decompose_box_quadratic(0.0, 4.0, 1.0, 3.0)
    assert alpha == pytest.approx(4.0)
    assert beta == pytest.approx(3.0)
    assert gamma == pytest.approx(-2.0)
    assert _decomposition_residual(0, 4, 1, 3, alpha, beta, gamma) <= 1e-12


def test_decompose_identical_intervals():
    """c=a, d=b is the trivial branch alpha=1, beta=0."""
    alpha, beta, gamma = decompose_box_quadratic(-2.0, 5.0, -2.0, 5.0)
    assert alpha == pytest.approx(1.0)
    assert beta == pytest.approx(0.0)


def test_decompose_shared_left_endpoint():
    """(0,2,0,1) hits the degenerate branch alpha=b/d, beta=b/d-1, gamma=0."""
    alpha, beta, gamma = decompose_box_quadratic(0.0, 2.0, 0.0, 1.0)
    assert alpha == pytest.approx(2.0)
    assert beta == pytest.approx(1.0)
    assert gamma == pytest.approx(0.0)
    assert _decomposition_residual(0, 2, 0, 1, alpha, beta, gamma) <= 1e-12


def test_decompose_shared_right_endpoint():
    """A subinterval sharing only the right endpoint is also degenerate."""
    alpha, beta, gamma = decompose_box_quadratic(0.0, 3.0, 1.0, 3.0)
    assert alpha >= 0 and beta >= 0
    assert _decomposition_residual(0, 3, 1, 3, alpha, beta, gamma) <= 1e-10


def test_decompose_symmetric_placement():
    """Centered subintervals (the r^2 = p^2 case) still decompose exactly."""
    alpha, beta, gamma = decompose_box_quadratic(-1.0, 1.0, -0.25, 0.25)
    assert alpha >= 0 and beta >= 0
    assert _decomposition_residual(-1, 1, -0.25, 0.25, alpha, beta, gamma) <= 1e-10


def test_decompose_random_tuples(rng):
    """Random a <= c < d <= b in [-10, 10]: exact identity, alpha/beta >= 0."""
    for _ in range(300):
        pts = np.sort(rng.uniform(-10.0, 10.0, size=4))
        a, c, d, b = pts
        if not c < d:
            continue
        alpha, beta, gamma = decompose_box_quadratic(a, b, c, d)
        assert alpha >= -1e-12 and beta >= -1e-12
        assert _decomposition_residual(a, b, c, d, alpha, beta, gamma) <= 1e-8


def test_decompose_rejects_bad_ordering():
    """Violations of a <= c < d <= b are invalid input."""
    with pytest.raises(ValueError):
        decompose_box_quadratic(0.0, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        decompose_box_quadratic(0.0, 1.0, -0.5, 0.5)
    with pytest.raises(ValueError):
        decompose_box_quadratic(0.0, 1.0, 0.5, 1.5)


# ---------------------------------------------------------------------------
# layout assembly
# ---------------------------------------------------------------------------


def test_layout_multiplier_degrees():
    """d_i = floor((k - deg g_i)/2), with the box quadratics at the tail."""
    np_, box = _normalized(
        """
        vars x y
        minimize x^2 + y^2
        st x^3 - y >= 0
        box -1 1
        """
    )
    layout = relaxation_layout(np_, box, 4)
    # generators: [1, g_1 (cubic), w_1, w_2]
    assert layout.multiplier_degrees == (2, 0, 1, 1)
    assert layout.block_dims == (6, 1, 3, 3)
    assert layout.generator_names[1] == "inequality 1"


def test_layout_rejects_small_k():
    with pytest.raises(ValueError):
        np_, box = _normalized("vars x\nminimize x\nbox 0 1\n")
        relaxation_layout(np_, box, 1)


def test_layout_rejects_high_degree_generator():
    """A generator above the relaxation order is named in the error."""
    np_, box = _normalized(
        "vars x\nminimize x\nst x^4 - 1 >= 0\nbox 0 1\n"
    )
    with pytest.raises(ValueError, match="inequality 1"):
        relaxation_layout(np_, box, 2)


def test_layout_rejects_high_degree_objective():
    np_, box = _normalized("vars x\nminimize x^4\nbox 0 1\n")
    with pytest.raises(ValueError):
        relaxation_layout(np_, box, 2)


# ---------------------------------------------------------------------------
# B_2 exactness
# ---------------------------------------------------------------------------


def test_glb_linear_on_unit_interval():
    """f = x on [0, 1] at k = 2 gives the exact bound 0."""
    np_, box = _normalized("vars x\nminimize x\nbox 0 1\n")
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOUND
    assert res.bound == pytest.approx(0.0, abs=1e-6)


def test_glb_square_is_exact():
    """f = x^2 on [-1, 1] at k = 2 gives 0."""
    np_, box = _normalized("vars x\nminimize x^2\nbox -1 1\n")
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOUND
    assert res.bound == pytest.approx(0.0, abs=1e-6)


def test_glb_concave_square():
    """f = -x^2 on [-1, 1] at k = 2 gives -1 via the certificate 1*(1 - x^2)."""
    np_, box = _normalized("vars x\nminimize -x^2\nbox -1 1\n")
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOUND
    assert res.bound == pytest.approx(-1.0, abs=1e-6)


def test_glb_reports_moment_diagnostic():
    """The moment value d_k* rides along and satisfies p_k* <= d_k* + tol."""
    np_, box = _normalized("vars x\nminimize -x^2\nbox -1 1\n")
    res = glb_B_k(np_, box, 2)
    assert res.moment_bound is not None
    assert res.bound <= res.moment_bound + 1e-6


# ---------------------------------------------------------------------------
# infeasibility certification
# ---------------------------------------------------------------------------


def test_empty_box_is_certified():
    """g = 1 - x^2 with box [2, 3] is empty at order 2: BoxInfeasible."""
    np_, box = _normalized(
        "vars x\nminimize x\nst 1 - x^2 >= 0\nbox 2 3\n"
    )
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOX_INFEASIBLE
    assert res.bound == math.inf


def test_empty_box_moment_route_agrees():
    """The moment relaxation of the empty box is infeasible as well."""
    np_, box = _normalized(
        "vars x\nminimize x\nst 1 - x^2 >= 0\nbox 2 3\n"
    )
    res = solve_moment_glb(np_, box, 2)
    assert res.status is GLBStatus.BOX_INFEASIBLE


def test_contradictory_equality_is_certified():
    """x == 1 and x == -1 cannot hold together on any box."""
    np_, box = _normalized(
        "vars x\nminimize x\nst x - 1 == 0\nst x + 1 == 0\nbox -2 2\n"
    )
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOX_INFEASIBLE


# ---------------------------------------------------------------------------
# monotonicity and the hierarchy sandwich
# ---------------------------------------------------------------------------


def test_nested_box_monotonicity(rng):
    """Shrinking the box can only raise the bound (module nesting)."""
    np_, _ = _normalized(
        """
        vars x y
        minimize x^4 - 3*x^2*y + y^2 + x
        box -2 2
        """
    )
    for _ in range(5):
        lo = rng.uniform(-2.0, -0.5, size=2)
        hi = rng.uniform(0.5, 2.0, size=2)
        outer = HyperRectangle(tuple(lo), tuple(hi))
        shrink = rng.uniform(0.1, 0.45, size=2)
        inner = HyperRectangle(
            tuple(lo + shrink * (hi - lo)), tuple(hi - shrink * (hi - lo))
        )
        r_out = glb_B_k(np_, outer, 4)
        r_in = glb_B_k(np_, inner, 4)
        assert r_out.status is GLBStatus.BOUND
        assert r_in.status is GLBStatus.BOUND
        assert r_out.bound <= r_in.bound + 1e-6


def test_hierarchy_is_monotone_in_k():
    """p_k* is nondecreasing in k over the admissible orders."""
    np_, box = _normalized(
        """
        vars x y
        minimize x^4 - 3*x^2*y + y^2 + x
        box -2 2
        """
    )
    bounds = [glb_B_k(np_, box, k).bound for k in (4, 6, 8)]
    assert bounds[0] <= bounds[1] + 1e-6
    assert bounds[1] <= bounds[2] + 1e-6


def test_hierarchy_closes_gap_on_camel(sixhump_problem):
    """The six-hump camel bound tightens from k=6 toward the true -1.0316."""
    np_ = normalize(sixhump_problem)
    box = initial_box(sixhump_problem)
    p6 = glb_B_k(np_, box, 6).bound
    p8 = glb_B_k(np_, box, 8).bound
    assert p6 <= p8 + 1e-6
    assert p8 <= -1.0316 + 1e-4


def test_sos_moment_sandwich_interior():
    """With interior feasible points the two routes agree to 1e-5."""
    np_, box = _normalized(
        """
        vars x y
        minimize x^4 - 3*x^2*y + y^2 + x
        box -2 2
        """
    )
    sos = glb_B_k(np_, box, 4)
    mom = solve_moment_glb(np_, box, 4)
    assert sos.status is GLBStatus.BOUND and mom.status is GLBStatus.BOUND
    assert sos.bound <= mom.bound + 1e-6
    assert abs(sos.bound - mom.bound) <= 1e-5


def test_bound_is_sound_against_grid(rng):
    """Every Bound(lambda) sits below the grid oracle's minimum."""
    p = parse_problem("vars x y\nminimize x\nbox -1.5 1.5\n")
    box = initial_box(p)
    for trial in range(6):
        f = random_polynomial(rng, 2, 4)
        np_ = replace(normalize(p), objective=f)
        res = glb_B_k(np_, box, 4)
        if res.status is not GLBStatus.BOUND:
            continue
        grid = grid_minimize(np_, box, points_per_axis=41)
        assert res.bound <= grid.best_objective + 1e-6


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def test_certificate_reconstruction_linear():
    """The Gram blocks rebuild f - lambda exactly: x = x^2 + w(x) on [0,1]."""
    np_, box = _normalized("vars x\nminimize x\nbox 0 1\n")
    res = glb_B_k(np_, box, 2)
    assert res.status is GLBStatus.BOUND
    assert certificate_residual_poly(res) <= 1e-6


def test_certificate_reconstruction_sixhump(sixhump_problem):
    """Certificate residual stays small on a real sextic instance."""
    np_ = normalize(sixhump_problem)
    box = initial_box(sixhump_problem)
    res = glb_B_k(np_, box, 6)
    assert res.status is GLBStatus.BOUND
    assert certificate_residual_poly(res) <= 1e-6


# ---------------------------------------------------------------------------
# moment vector
# ---------------------------------------------------------------------------


def test_moment_vector_is_dirac_at_minimizer():
    """f = x on [0, 1]: optimal pseudo-moments are those of delta_0."""
    np_, box = _normalized("vars x\nminimize x\nbox 0 1\n")
    res = solve_moment_glb(np_, box, 2)
    assert res.status is GLBStatus.BOUND
    assert res.bound == pytest.approx(0.0, abs=1e-6)
    y = res.moment_vector
    assert y is not None
    assert y[0] == pytest.approx(1.0, abs=1e-7)
    assert abs(y[1]) <= 1e-4 and abs(y[2]) <= 1e-4


def test_moment_vector_locates_interior_minimizer():
    """f = (x - 1/4)^2: y_x recovers the minimizer 1/4."""
    np_, box = _normalized(
        "vars x\nminimize x^2 - 1/2*x + 1/16\nbox 0 1\n"
    )
    res = solve_moment_glb(np_, box, 4)
    assert res.bound == pytest.approx(0.0, abs=1e-6)
    assert res.moment_vector[1] == pytest.approx(0.25, abs=1e-4)


# ---------------------------------------------------------------------------
# ball preprocessing
# ---------------------------------------------------------------------------


def test_add_ball_constraint_appends_generator():
    np_, _ = _normalized("vars x y\nminimize x\nst x >= 0\nbox -1 1\n")
    augmented = add_ball_constraint(np_, 3.0)
    ball = augmented.inequalities[-1]
    assert ball.terms == {(0, 0): 9.0, (2, 0): -1.0, (0, 2): -1.0}
    assert len(augmented.inequalities) == len(np_.inequalities) + 1


def test_add_ball_constraint_rejects_bad_radius():
    np_, _ = _normalized("vars x\nminimize x\nbox -1 1\n")
    with pytest.raises(ValueError):
        add_ball_constraint(np_, 0.0)
