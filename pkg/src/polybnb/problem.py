"""Problem model and text-format parser.

A problem file declares variables, one objective, polynomial constraints and
an optional bounding box::

    vars x y
    minimize x^2 + y^2 - x*y
    st 1 - x^2 - y^2 >= 0
    st x + y == 0
    box -1 1
    box y -2 2

Lines starting with ``#`` are comments.  Coefficients may be decimal
(``0.5``, ``2e-3``) or rational (``1/3``) literals; ``^`` binds tighter than
``*``, which binds tighter than ``+``/``-``; parentheses distribute at parse
time; implicit multiplication is rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .polynomials import Polynomial


class ParseError(ValueError):
    """Syntax or semantic error in a problem file, with source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class HyperRectangle:
    """Axis-aligned box {x : lower <= x <= upper} with positive edge lengths."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        for a, b in zip(self.lower, self.upper):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("box bounds must be finite")
            if not a < b:
                raise ValueError(f"degenerate box edge [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def edges(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def longest_edge(self) -> Tuple[float, int]:
        """Length and axis of the longest edge; ties pick the smallest axis."""
        e = self.edges()
        i = int(np.argmax(e))
        return float(e[i]), i

    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def volume(self) -> float:
        return float(np.prod(self.edges()))

    def log_volume(self) -> float:
        return float(np.sum(np.log(self.edges())))

    def contains(self, x: Sequence[float], tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= np.asarray(self.lower) - tol)
            and np.all(x <= np.asarray(self.upper) + tol)
        )


@dataclass(frozen=True)
class GPOProblem:
    """Minimize objective over the set cut out by the constraints."""

    variables: Tuple[str, ...]
    objective: Polynomial
    inequalities: Tuple[Polynomial, ...]   # g_i(x) >= 0
    equalities: Tuple[Polynomial, ...]     # h_j(x) == 0
    box: Optional[HyperRectangle] = None

    def __post_init__(self):
        n = len(self.variables)
        if len(set(self.variables)) != n:
            raise ValueError("duplicate variable names")
        for p in (self.objective, *self.inequalities, *self.equalities):
            if p.nvars != n:
                raise ValueError("constraint variable count mismatch")
        if self.box is not None and self.box.dim != n:
            raise ValueError("box dimension mismatch")

    @property
    def nvars(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class NormalizedProblem:
    """Inequality-only view: each h == 0 contributes the pair h >= 0, -h >= 0.

    ``inequalities`` holds [g_1..g_s, h_1, -h_1, ..., h_t, -h_t] in input
    order; the first ``n_original`` entries are the declared inequalities and
    the retained ``equalities`` allow callers to apply a separate feasibility
    tolerance to equality constraints.
    """

    variables: Tuple[str, ...]
    objective: Polynomial
    inequalities: Tuple[Polynomial, ...]
    n_original: int
    equalities: Tuple[Polynomial, ...]
    box: Optional[HyperRectangle] = None

    @property
    def nvars(self) -> int:
        return len(self.variables)


def normalize(p: GPOProblem) -> NormalizedProblem:
    gs: List[Polynomial] = list(p.inequalities)
    for h in p.equalities:
        gs.append(h)
        gs.append(-h)
    return NormalizedProblem(
        variables=p.variables,
        objective=p.objective,
        inequalities=tuple(gs),
        n_original=len(p.inequalities),
        equalities=p.equalities,
        box=p.box,
    )


def initial_box(p: GPOProblem | NormalizedProblem, radius: float = 0.0) -> HyperRectangle:
    """Declared box if present, else the cube [-radius, radius]^n."""
    if p.box is not None:
        return p.box
    if radius <= 0.0:
        raise ValueError("problem declares no box; a positive --radius is required")
    return HyperRectangle((-radius,) * p.nvars, (radius,) * p.nvars)


# ---------------------------------------------------------------------------
# tokenizer / recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<NUMBER>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<GE>>=)
  | (?P<EQ>==)
  | (?P<OP>[+\-*^()/])
  | (?P<WS>\s+)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize_line(text: str, line_no: int) -> List[_Token]:
    toks: List[_Token] = []
    pos = 0
    while pos < len(text):
        if text[pos] == "#":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line_no, pos + 1)
        kind = m.lastgroup
        if kind != "WS":
            toks.append(_Token(kind, m.group(), line_no, pos + 1))
        pos = m.end()
    return toks


class _LineParser:
    def __init__(self, tokens: List[_Token], line_no: int, var_index: Dict[str, int]):
        self.tokens = tokens
        self.pos = 0
        self.line = line_no
        self.vars = var_index
        self.nvars = len(var_index)

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        t = self.peek()
        if t is None:
            last = self.tokens[-1] if self.tokens else None
            col = (last.col + len(last.text)) if last else 1
            raise ParseError("unexpected end of line", self.line, col)
        self.pos += 1
        return t

    def expect_end(self):
        t = self.peek()
        if t is not None:
            raise ParseError(f"unexpected token {t.text!r}", t.line, t.col)

    def error(self, msg: str):
        t = self.peek()
        if t is not None:
            raise ParseError(msg, t.line, t.col)
        last = self.tokens[-1] if self.tokens else None
        raise ParseError(msg, self.line, (last.col + len(last.text)) if last else 1)

    # number := NUMBER ('/' NUMBER)?   (rational literal; no division operator)
    def parse_number(self) -> float:
        t = self.next()
        if t.kind != "NUMBER":
            raise ParseError(f"expected a number, found {t.text!r}", t.line, t.col)
        value = float(t.text)
        nxt = self.peek()
        if nxt is not None and nxt.text == "/":
            self.next()
            d = self.next()
            if d.kind != "NUMBER":
                raise ParseError(
                    f"expected denominator after '/', found {d.text!r}", d.line, d.col
                )
            denom = float(d.text)
            if denom == 0.0:
                raise ParseError("zero denominator in rational literal", d.line, d.col)
            value /= denom
        return value

    def parse_signed_number(self) -> float:
        sign = 1.0
        t = self.peek()
        while t is not None and t.text in ("+", "-"):
            if t.text == "-":
                sign = -sign
            self.next()
            t = self.peek()
        return sign * self.parse_number()

    def parse_exponent(self) -> int:
        t = self.next()
        if t.kind != "NUMBER" or not t.text.isdigit():
            raise ParseError(
                f"exponent must be a nonnegative integer, found {t.text!r}", t.line, t.col
            )
        return int(t.text)

    def parse_atom(self) -> Polynomial:
        t = self.next()
        if t.kind == "NUMBER":
            self.pos -= 1
            return Polynomial.constant(self.nvars, self.parse_number())
        if t.kind == "IDENT":
            if t.text not in self.vars:
                raise ParseError(f"unknown variable {t.text!r}", t.line, t.col)
            return Polynomial.variable(self.vars[t.text], self.nvars)
        if t.text == "(":
            inner = self.parse_expr()
            closing = self.next()
            if closing.text != ")":
                raise ParseError(
                    f"expected ')', found {closing.text!r}", closing.line, closing.col
                )
            return inner
        raise ParseError(f"expected a term, found {t.text!r}", t.line, t.col)

    def parse_factor(self) -> Polynomial:
        base = self.parse_atom()
        t = self.peek()
        if t is not None and t.text == "^":
            self.next()
            return base ** self.parse_exponent()
        return base

    def parse_term(self) -> Polynomial:
        p = self.parse_factor()
        while True:
            t = self.peek()
            if t is None:
                return p
            if t.text == "*":
                self.next()
                p = p * self.parse_factor()
            elif t.kind in ("NUMBER", "IDENT") or t.text == "(":
                raise ParseError(
                    f"missing operator before {t.text!r} "
                    "(implicit multiplication is not allowed)",
                    t.line,
                    t.col,
                )
            else:
                return p

    def parse_expr(self) -> Polynomial:
        t = self.peek()
        sign = 1.0
        if t is not None and t.text in ("+", "-"):
            self.next()
            sign = -1.0 if t.text == "-" else 1.0
        total = self.parse_term().scale(sign)
        while True:
            t = self.peek()
            if t is None or t.text not in ("+", "-"):
                return total
            self.next()
            nxt = self.parse_term()
            total = total + (nxt.scale(-1.0) if t.text == "-" else nxt)


def parse_problem(text: str) -> GPOProblem:
    """Parse problem text; raises ParseError with line/column on bad input."""
    variables: List[str] = []
    var_index: Dict[str, int] = {}
    objective: Optional[Polynomial] = None
    inequalities: List[Polynomial] = []
    equalities: List[Polynomial] = []
    box_lo: List[Optional[float]] = []
    box_hi: List[Optional[float]] = []
    saw_box = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize_line(raw, line_no)
        if not tokens:
            continue
        head = tokens[0]
        body = _LineParser(tokens[1:], line_no, var_index)

        if head.text == "vars":
            if variables:
                raise ParseError("duplicate vars line", head.line, head.col)
            while body.peek() is not None:
                t = body.next()
                if t.kind != "IDENT":
                    raise ParseError(f"expected a variable name, found {t.text!r}", t.line, t.col)
                if t.text in var_index:
                    raise ParseError(f"duplicate variable {t.text!r}", t.line, t.col)
                var_index[t.text] = len(variables)
                variables.append(t.text)
            if not variables:
                raise ParseError("vars line declares no variables", head.line, head.col)
            box_lo = [None] * len(variables)
            box_hi = [None] * len(variables)
            continue

        if not variables:
            raise ParseError("vars line must come first", head.line, head.col)

        if head.text == "minimize":
            if objective is not None:
                raise ParseError("duplicate minimize line", head.line, head.col)
            objective = body.parse_expr()
            body.expect_end()
        elif head.text == "st":
            lhs = body.parse_expr()
            cmp_tok = body.next()
            if cmp_tok.kind not in ("GE", "EQ"):
                raise ParseError(
                    f"expected '>=' or '==', found {cmp_tok.text!r}", cmp_tok.line, cmp_tok.col
                )
            rhs = body.parse_expr()
            body.expect_end()
            moved = lhs - rhs
            if cmp_tok.kind == "GE":
                inequalities.append(moved)
            else:
                equalities.append(moved)
        elif head.text == "box":
            saw_box = True
            t = body.peek()
            if t is not None and t.kind == "IDENT":
                name = body.next()
                if name.text not in var_index:
                    raise ParseError(f"unknown variable {name.text!r}", name.line, name.col)
                lo = body.parse_signed_number()
                hi = body.parse_signed_number()
                body.expect_end()
                if not lo < hi:
                    raise ParseError(f"empty box range [{lo}, {hi}]", head.line, head.col)
                box_lo[var_index[name.text]] = lo
                box_hi[var_index[name.text]] = hi
            else:
                lo = body.parse_signed_number()
                hi = body.parse_signed_number()
                body.expect_end()
                if not lo < hi:
                    raise ParseError(f"empty box range [{lo}, {hi}]", head.line, head.col)
                box_lo = [lo] * len(variables)
                box_hi = [hi] * len(variables)
        else:
            raise ParseError(
                f"unknown statement {head.text!r} "
                "(expected vars, minimize, st or box)",
                head.line,
                head.col,
            )

    if not variables:
        raise ParseError("missing vars line", 1, 1)
    if objective is None:
        raise ParseError("missing minimize line", 1, 1)

    box = None
    if saw_box:
        missing = [variables[i] for i, v in enumerate(box_lo) if v is None]
        if missing:
            raise ParseError(
                f"box does not cover variable(s) {', '.join(missing)}", 1, 1
            )
        box = HyperRectangle(tuple(box_lo), tuple(box_hi))  # type: ignore[arg-type]

    return GPOProblem(
        variables=tuple(variables),
        objective=objective,
        inequalities=tuple(inequalities),
        equalities=tuple(equalities),
        box=box,
    )


def parse_problem_file(path: str) -> GPOProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem(fh.read())


def _poly_to_text(p: Polynomial, variables: Sequence[str]) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for alpha, c in p.items():
        factors = []
        if c != 1.0 or sum(alpha) == 0:
            factors.append(f"{c:.17g}")
        for i, e in enumerate(alpha):
            if e == 1:
                factors.append(variables[i])
            elif e > 1:
                factors.append(f"{variables[i]}^{e}")
        parts.append("*".join(factors))
    out = parts[0]
    for part in parts[1:]:
        if part.startswith("-"):
            out += " - " + part[1:]
        else:
            out += " + " + part
    return out


def problem_to_text(p: GPOProblem) -> str:
    """Render a problem in the input grammar; parsing it back is lossless."""
    lines = ["vars " + " ".join(p.variables)]
    lines.append("minimize " + _poly_to_text(p.objective, p.variables))
    for g in p.inequalities:
        lines.append("st " + _poly_to_text(g, p.variables) + " >= 0")
    for h in p.equalities:
        lines.append("st " + _poly_to_text(h, p.variables) + " == 0")
    if p.box is not None:
        for name, lo, hi in zip(p.variables, p.box.lower, p.box.upper):
            lines.append(f"box {name} {lo:.17g} {hi:.17g}")
    return "\n".join(lines) + "\n"
