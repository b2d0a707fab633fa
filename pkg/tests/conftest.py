"""Shared fixtures: paths, deterministic RNG, and reference problems."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from polybnb.problem import GPOProblem, parse_problem_file
from polybnb.polynomials import Polynomial

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240531)


@pytest.fixture
def sixvar_problem() -> GPOProblem:
    """The six-variable benchmark with two equality constraints."""
    return parse_problem_file(FIXTURES / "sixvar.gpo")


@pytest.fixture
def sixhump_problem() -> GPOProblem:
    return parse_problem_file(FIXTURES / "sixhump.gpo")


def random_polynomial(
    gen: np.random.Generator, nvars: int, degree: int, terms: int = 8
) -> Polynomial:
    """Random sparse polynomial with coefficients in [-1, 1]."""
    out = Polynomial.zero(nvars)
    for _ in range(terms):
        alpha = gen.multinomial(int(gen.integers(0, degree + 1)), [1 / nvars] * nvars)
        out = out + Polynomial.monomial(tuple(int(e) for e in alpha), gen.uniform(-1, 1))
    return out


def min_eig_sdp(A: np.ndarray):
    """Encode max lambda s.t. A - lambda*I PSD, i.e. the smallest eigenvalue.

    The PSD block is X = A - lambda*I, pinned entrywise by the constraints
    X_ij + lambda*delta_ij = A_ij; off-diagonal rows carry the factor 2 from
    the symmetric-pair convention.  The optimum of the minimized objective
    -lambda equals -lambda_min(A).
    """
    from polybnb.sdp import SDPConstraint, SDPProblem

    d = A.shape[0]
    cons = []
    for i in range(d):
        for j in range(i, d):
            free = {0: 1.0} if i == j else {}
            rhs = A[i, j] if i == j else 2.0 * A[i, j]
            cons.append(SDPConstraint(blocks={0: [(i, j, 1.0)]}, free=free, rhs=rhs))
    return SDPProblem(
        block_dims=(d,),
        n_free=1,
        block_costs={},
        free_costs={0: -1.0},
        constraints=tuple(cons),
    )
