"""Sparse multivariate polynomials over a graded lexicographic monomial order.

A monomial is an exponent tuple, a polynomial is a mapping from exponent
tuples to float coefficients.  Everything downstream (SOS assembly, moment
matrices, traces) relies on one fixed total order of monomials: lower total
degree first, and within equal degree the monomial with the larger exponent
on the earliest differing variable comes first.  For two variables this gives

    1 < x1 < x2 < x1^2 < x1*x2 < x2^2 < ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]

_SIZE_LIMIT = 2**62


def grlex_key(alpha: Exponent):
    """Sort key realizing the graded lexicographic order."""
    return (sum(alpha), tuple(-e for e in alpha))


def grlex_compare(a: Exponent, b: Exponent) -> int:
    """Return -1, 0 or +1 as a precedes, equals or follows b in grlex order."""
    if len(a) != len(b):
        raise ValueError("exponent tuples of different lengths are not comparable")
    ka, kb = grlex_key(a), grlex_key(b)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def basis_size(nvars: int, degree: int) -> int:
    """Number of monomials in nvars variables of total degree <= degree."""
    if nvars < 0 or degree < 0:
        raise ValueError("nvars and degree must be nonnegative")
    size = math.comb(degree + nvars, degree)
    if size > _SIZE_LIMIT:
        raise OverflowError(f"basis of size {size} exceeds the supported index range")
    return size


def monomial_basis(nvars: int, degree: int) -> Tuple[Exponent, ...]:
    """All exponent tuples with |alpha| <= degree, sorted in grlex order."""
    expected = basis_size(nvars, degree)
    if nvars == 0:
        return ((),)
    out = []
    for total in range(degree + 1):
        block = []
        # combinations_with_replacement yields the variable indices receiving
        # each unit of degree; counting multiplicities gives every exponent
        # tuple of this total degree exactly once.
        for picks in combinations_with_replacement(range(nvars), total):
            alpha = [0] * nvars
            for i in picks:
                alpha[i] += 1
            block.append(tuple(alpha))
        block.sort(key=grlex_key)
        out.extend(block)
    assert len(out) == expected
    return tuple(out)


@dataclass(frozen=True)
class MonomialBasis:
    """The grlex-ordered monomial basis Z_d of degree <= d in n variables."""

    nvars: int
    degree: int
    monomials: Tuple[Exponent, ...]

    @staticmethod
    def create(nvars: int, degree: int) -> "MonomialBasis":
        return MonomialBasis(nvars, degree, monomial_basis(nvars, degree))

    def __len__(self) -> int:
        return len(self.monomials)

    def index_map(self) -> Dict[Exponent, int]:
        return {alpha: i for i, alpha in enumerate(self.monomials)}


def _validate_exponent(alpha: Sequence[int], nvars: int) -> Exponent:
    alpha = tuple(int(e) for e in alpha)
    if len(alpha) != nvars:
        raise ValueError(f"exponent {alpha} has {len(alpha)} entries, expected {nvars}")
    if any(e < 0 for e in alpha):
        raise ValueError(f"negative exponent in {alpha}")
    return alpha


class Polynomial:
    """Immutable sparse polynomial; term iteration follows the grlex order.

    Zero coefficients produced by cancellation are dropped, so the zero
    polynomial has an empty term map and compares equal regardless of how it
    was produced.
    """

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Exponent, float] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        object.__setattr__(self, "nvars", nvars)
        clean: Dict[Exponent, float] = {}
        if terms:
            for alpha, c in terms.items():
                alpha = _validate_exponent(alpha, nvars)
                c = float(c) + clean.get(alpha, 0.0)
                if c == 0.0:
                    clean.pop(alpha, None)
                else:
                    clean[alpha] = c
        ordered = {a: clean[a] for a in sorted(clean, key=grlex_key)}
        object.__setattr__(self, "_terms", ordered)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(nvars: int) -> "Polynomial":
        return Polynomial(nvars, {})

    @staticmethod
    def constant(nvars: int, c: float) -> "Polynomial":
        return Polynomial(nvars, {(0,) * nvars: c})

    @staticmethod
    def variable(i: int, nvars: int) -> "Polynomial":
        if not 0 <= i < nvars:
            raise ValueError(f"variable index {i} out of range for {nvars} variables")
        alpha = tuple(1 if j == i else 0 for j in range(nvars))
        return Polynomial(nvars, {alpha: 1.0})

    @staticmethod
    def monomial(alpha: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        alpha = tuple(int(e) for e in alpha)
        return Polynomial(len(alpha), {alpha: coeff})

    # -- inspection ---------------------------------------------------------

    @property
    def terms(self) -> Dict[Exponent, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(_validate_exponent(alpha, self.nvars), 0.0)

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial reports degree 0."""
        if not self._terms:
            return 0
        return max(sum(a) for a in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, tuple(self._terms.items())))

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for alpha, c in self._terms.items():
            factors = [f"{c:g}"] if (c != 1.0 or sum(alpha) == 0) else []
            for i, e in enumerate(alpha):
                if e == 1:
                    factors.append(f"x{i + 1}")
                elif e > 1:
                    factors.append(f"x{i + 1}^{e}")
            parts.append("*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")

    # -- arithmetic ---------------------------------------------------------

    def _check_same(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise ValueError("polynomials over different variable counts")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_same(other)
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            out[alpha] = out.get(alpha, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_same(other)
        out: Dict[Exponent, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                g = tuple(x + y for x, y in zip(a, b))
                out[g] = out.get(g, 0.0) + ca * cb
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def scale(self, c: float) -> "Polynomial":
        return Polynomial(self.nvars, {a: c * v for a, v in self._terms.items()})

    def __pow__(self, e: int):
        if not isinstance(e, int) or e < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        out = Polynomial.constant(self.nvars, 1.0)
        for _ in range(e):
            out = out * self
        return out

    # -- calculus and substitution ------------------------------------------

    def partial(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable i."""
        if not 0 <= i < self.nvars:
            raise ValueError(f"variable index {i} out of range")
        out: Dict[Exponent, float] = {}
        for alpha, c in self._terms.items():
            if alpha[i] == 0:
                continue
            beta = list(alpha)
            beta[i] -= 1
            out[tuple(beta)] = out.get(tuple(beta), 0.0) + c * alpha[i]
        return Polynomial(self.nvars, out)

    def affine_substitute(self, offset: Sequence[float], scale: Sequence[float]) -> "Polynomial":
        """Substitute x_i = offset_i + scale_i * u_i, returning a polynomial in u."""
        if len(offset) != self.nvars or len(scale) != self.nvars:
            raise ValueError("offset/scale length must match nvars")
        images = [
            Polynomial(self.nvars, {(0,) * self.nvars: float(offset[i])})
            + Polynomial.variable(i, self.nvars).scale(float(scale[i]))
            for i in range(self.nvars)
        ]
        out = Polynomial.zero(self.nvars)
        for alpha, c in self._terms.items():
            term = Polynomial.constant(self.nvars, c)
            for i, e in enumerate(alpha):
                for _ in range(e):
                    term = term * images[i]
            out = out + term
        return out

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError(f"point of shape {x.shape}, expected ({self.nvars},)")
        total = 0.0
        for alpha, c in self._terms.items():
            v = c
            for xi, e in zip(x, alpha):
                if e:
                    v *= xi**e
            total += v
        return total

    def eval_many(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at each row of pts, shape (m, nvars) -> (m,)."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise ValueError(f"points of shape {pts.shape}, expected (m, {self.nvars})")
        total = np.zeros(pts.shape[0])
        for alpha, c in self._terms.items():
            v = np.full(pts.shape[0], c)
            for i, e in enumerate(alpha):
                if e:
                    v *= pts[:, i] ** e
            total += v
        return total
