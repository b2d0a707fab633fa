"""Brute-force ground truth: dense-grid minimization and point checking.

Relaxation bounds and branch-and-bound answers are only as trustworthy as
the independent check run against them.  This module supplies that check
with no shared machinery: an exhaustive scan of a uniform grid over the box
(corners included) for the best feasible point, and a per-constraint report
for a single candidate point.

A uniform grid rarely hits an equality constraint exactly, so equalities
get their own looser tolerance ``tau_eq`` while declared inequalities use
the tight ``tau_feas``.  Ties between equally good grid points go to the
lexicographically smallest index tuple, which a C-order scan visits first,
so the result does not depend on chunking or scan order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .problem import GPOProblem, HyperRectangle, NormalizedProblem

GRID_BUDGET = 100_000_000
_CHUNK = 1 << 18


@dataclass(frozen=True)
class GridResult:
    """Outcome of a grid scan; ``best_point is None`` means no feasible point."""

    best_point: Optional[Tuple[float, ...]]
    best_objective: Optional[float]
    points_per_axis: int
    feasible_count: int

    @property
    def found(self) -> bool:
        return self.best_point is not None


def grid_minimize(
    p: NormalizedProblem,
    box: HyperRectangle,
    points_per_axis: int,
    tau_feas: float = 1e-9,
    tau_eq: float = 1e-3,
) -> GridResult:
    """Exhaustively minimize over the uniform grid of ``points_per_axis**n``.

    A grid point is feasible when every declared inequality is >= -tau_feas
    and every equality satisfies |h| <= tau_eq.  The grid includes the box
    corners.  Returns an empty ``GridResult`` when no grid point is
    feasible; refuses (ValueError) when the scan would exceed GRID_BUDGET
    points.
    """
    n = box.dim
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be at least 2")
    total = points_per_axis**n
    if total > GRID_BUDGET:
        raise ValueError(
            f"grid of {points_per_axis}^{n} = {total} points exceeds the "
            f"budget of {GRID_BUDGET}; lower points_per_axis"
        )
    axes = [
        np.linspace(box.lower[i], box.upper[i], points_per_axis)
        for i in range(n)
    ]
    shape = (points_per_axis,) * n
    gs = p.inequalities[: p.n_original]

    best_val = float("inf")
    best_flat = -1
    feasible_count = 0
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.unravel_index(flat, shape)
        pts = np.column_stack([axes[i][idx[i]] for i in range(n)])
        ok = np.ones(len(flat), dtype=bool)
        for g in gs:
            ok &= g.eval_many(pts) >= -tau_feas
        for h in p.equalities:
            ok &= np.abs(h.eval_many(pts)) <= tau_eq
        if not np.any(ok):
            continue
        feasible_count += int(np.count_nonzero(ok))
        vals = p.objective.eval_many(pts[ok])
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_flat = int(flat[np.flatnonzero(ok)[j]])
    if best_flat < 0:
        return GridResult(None, None, points_per_axis, 0)
    idx = np.unravel_index(best_flat, shape)
    point = tuple(float(axes[i][idx[i]]) for i in range(n))
    return GridResult(point, best_val, points_per_axis, feasible_count)


@dataclass(frozen=True)
class CheckReport:
    """Constraint-by-constraint evaluation of one candidate point."""

    objective_value: float
    inequalities: Tuple[float, ...]   # g_i(x), declared order
    equalities: Tuple[float, ...]     # h_j(x), signed
    box_terms: Tuple[float, ...]      # (x_i - a_i)(b_i - x_i), empty without a box
    delta: float
    failures: Tuple[str, ...]
    passed: bool


def check_point(p: GPOProblem, x: Sequence[float], delta: float) -> CheckReport:
    """Report f(x) and every constraint value, flagged against ``delta``.

    A point passes when every inequality (including the box terms, if a box
    is declared) is >= -delta and every equality has |h| <= delta.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.nvars,):
        raise ValueError(f"point of shape {x.shape}, expected ({p.nvars},)")
    ineq = tuple(float(g(x)) for g in p.inequalities)
    eq = tuple(float(h(x)) for h in p.equalities)
    box_terms: Tuple[float, ...] = ()
    if p.box is not None:
        box_terms = tuple(
            float((x[i] - p.box.lower[i]) * (p.box.upper[i] - x[i]))
            for i in range(p.nvars)
        )
    failures = []
    for i, v in enumerate(ineq):
        if v < -delta:
            failures.append(f"inequality {i + 1}: {v:.6g} < {-delta:.6g}")
    for j, v in enumerate(eq):
        if abs(v) > delta:
            failures.append(f"equality {j + 1}: |{v:.6g}| > {delta:.6g}")
    for i, v in enumerate(box_terms):
        if v < -delta:
            failures.append(f"box {i + 1}: {v:.6g} < {-delta:.6g}")
    return CheckReport(
        objective_value=float(p.objective(x)),
        inequalities=ineq,
        equalities=eq,
        box_terms=box_terms,
        delta=delta,
        failures=tuple(failures),
        passed=not failures,
    )
