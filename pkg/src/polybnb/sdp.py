"""Block-diagonal semidefinite programming via a self-dual interior-point method.

Problem form (primal)::

    minimize    sum_b <C_b, X_b>  +  c_f . z
    subject to  sum_b <A_jb, X_b> + a_jf . z  =  b_j     (j = 1..m)
                X_b  PSD for every block b,   z free

and its dual  max b.y  s.t.  C_b - sum_j y_j A_jb PSD,  c_f - A_f^T y = 0.

The solver embeds primal and dual in the homogeneous self-dual model of
Ye/Todd/Mizuno (tau/kappa variables), takes Mehrotra predictor-corrector
steps in the Nesterov-Todd scaling, and classifies the outcome as optimal,
certified primal infeasible, or certified dual infeasible / unbounded.
Infeasibility statuses are only reported when the improving-ray certificate
actually verifies against the problem data; everything else surfaces as an
iteration limit or a numerical failure, never as a fake optimum.

All linear algebra is dense per block (the intended use has block sizes in
the tens), and the iteration is fully deterministic: repeated solves of the
same problem take bitwise-identical paths.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import (
    cho_factor,
    cho_solve,
    cholesky,
    eigvalsh,
    lu_factor,
    lu_solve,
    qr,
    svd,
)

__all__ = [
    "SDPStatus",
    "SDPOptions",
    "SDPConstraint",
    "SDPProblem",
    "SDPSolution",
    "solve_sdp",
    "certificate_residual",
    "write_sdpa",
]


class SDPStatus(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE_OR_UNBOUNDED = "DualInfeasibleOrUnbounded"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SDPOptions:
    gap_tol: float = 1e-8
    psd_tol: float = 1e-9
    max_iter: int = 200
    feas_tol: Optional[float] = None   # defaults to gap_tol
    infeas_tol: float = 1e-8           # tau/kappa classification threshold
    cert_tol: float = 1e-6             # improving-ray residual acceptance
    step_fraction: float = 0.98
    reduced_tol: float = 1e-6          # accept the best iterate at this
                                       # accuracy when the iteration dies
    verbose: bool = False              # per-iteration diagnostics on stderr

    def feas(self) -> float:
        return self.gap_tol if self.feas_tol is None else self.feas_tol


@dataclass(frozen=True)
class SDPConstraint:
    """One equality row:  sum_b <A_b, X_b> + sum_i free[i] * z_i = rhs.

    ``blocks`` maps block index -> entries (row, col, value); an off-diagonal
    entry (i, j, v) with i != j stands for the symmetric pair A[i,j] = A[j,i]
    = v and must be given once.  Repeated entries accumulate.
    """

    blocks: Dict[int, Sequence[Tuple[int, int, float]]]
    free: Dict[int, float] = field(default_factory=dict)
    rhs: float = 0.0


@dataclass(frozen=True)
class SDPProblem:
    block_dims: Tuple[int, ...]
    n_free: int
    block_costs: Dict[int, Sequence[Tuple[int, int, float]]]
    free_costs: Dict[int, float]
    constraints: Tuple[SDPConstraint, ...]

    def __post_init__(self):
        for d in self.block_dims:
            if d < 1:
                raise ValueError("block dimensions must be positive")
        if self.n_free < 0:
            raise ValueError("n_free must be nonnegative")


@dataclass
class SDPSolution:
    status: SDPStatus
    iterations: int
    primal_objective: Optional[float] = None
    dual_objective: Optional[float] = None
    blocks: Optional[List[np.ndarray]] = None        # primal X_b
    free: Optional[np.ndarray] = None                # primal z
    y: Optional[np.ndarray] = None                   # dual multipliers
    dual_slacks: Optional[List[np.ndarray]] = None   # S_b = C_b - sum y_j A_jb
    certificate: Optional[dict] = None               # improving ray, if any
    message: str = ""

    @property
    def gap(self) -> Optional[float]:
        if self.primal_objective is None or self.dual_objective is None:
            return None
        return abs(self.primal_objective - self.dual_objective)


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------


def _entries_to_matrix(dim: int, entries: Sequence[Tuple[int, int, float]]) -> np.ndarray:
    M = np.zeros((dim, dim))
    for i, j, v in entries:
        if not (0 <= i < dim and 0 <= j < dim):
            raise ValueError(f"entry ({i},{j}) outside block of dimension {dim}")
        M[i, j] += v
        if i != j:
            M[j, i] += v
    return M


class _Compiled:
    """Row-scaled dense data, with per-block constraint-row supports."""

    def __init__(self, prob: SDPProblem):
        self.orig_dims = list(prob.block_dims)
        self.nf_user = prob.n_free
        nb_orig = len(self.orig_dims)
        m_in = len(prob.constraints)

        C_orig = [np.zeros((d, d)) for d in self.orig_dims]
        for bidx, entries in prob.block_costs.items():
            C_orig[bidx] = _entries_to_matrix(self.orig_dims[bidx], entries)
        c_user = np.zeros(self.nf_user)
        for i, v in prob.free_costs.items():
            c_user[i] = v

        A_orig: List[List[np.ndarray]] = [[] for _ in range(nb_orig)]
        rows_orig: List[List[int]] = [[] for _ in range(nb_orig)]
        A_free_user = np.zeros((m_in, self.nf_user))
        b = np.zeros(m_in)
        for j, con in enumerate(prob.constraints):
            b[j] = con.rhs
            for i, v in con.free.items():
                A_free_user[j, i] = v
            for bidx, entries in con.blocks.items():
                M = _entries_to_matrix(self.orig_dims[bidx], entries)
                if np.any(M):
                    A_orig[bidx].append(M)
                    rows_orig[bidx].append(j)

        # Twin merge.  Two zero-cost blocks that enter every row with exactly
        # opposite coefficient matrices only constrain their difference,
        # which ranges over all symmetric matrices; keeping both in the cone
        # leaves the primal unbounded along (X1, X2) -> (X1+tI, X2+tI) and
        # forces the two dual slacks to be exact negatives, hence zero, so
        # the central path degenerates.  Replacing the pair by free
        # variables for the difference is an exact reformulation (split the
        # solved difference into PSD positive/negative parts to report X1,
        # X2).  Equality multipliers compiled as +/- generator pairs have
        # exactly this shape.
        self.merged_pairs: List[dict] = []
        merged = [False] * nb_orig
        nf_extra = 0
        for b1 in range(nb_orig):
            if merged[b1] or np.any(C_orig[b1]) or not rows_orig[b1]:
                continue
            s1 = np.stack(A_orig[b1])
            for b2 in range(b1 + 1, nb_orig):
                if (
                    merged[b2]
                    or self.orig_dims[b2] != self.orig_dims[b1]
                    or np.any(C_orig[b2])
                    or rows_orig[b2] != rows_orig[b1]
                ):
                    continue
                s2 = np.stack(A_orig[b2])
                if not np.array_equal(s2, -s1):
                    continue
                merged[b1] = merged[b2] = True
                d = self.orig_dims[b1]
                self.merged_pairs.append(
                    {
                        "plus": b1,
                        "minus": b2,
                        "dim": d,
                        "rows": list(rows_orig[b1]),
                        "stack": s1,
                        "zstart": self.nf_user + nf_extra,
                    }
                )
                nf_extra += d * (d + 1) // 2
                break

        self.cone_keep = [bb for bb in range(nb_orig) if not merged[bb]]
        self.dims = [self.orig_dims[bb] for bb in self.cone_keep]
        self.nb = len(self.dims)
        self.nf = self.nf_user + nf_extra
        C = [C_orig[bb] for bb in self.cone_keep]
        c_free = np.concatenate([c_user, np.zeros(nf_extra)])
        A_free = np.zeros((m_in, self.nf))
        A_free[:, : self.nf_user] = A_free_user
        for pair in self.merged_pairs:
            d = pair["dim"]
            iu = np.triu_indices(d)
            weight = np.where(iu[0] == iu[1], 1.0, 2.0)
            cols = slice(pair["zstart"], pair["zstart"] + d * (d + 1) // 2)
            for M, j in zip(pair["stack"], pair["rows"]):
                A_free[j, cols] += M[iu] * weight

        A_full: List[List[np.ndarray]] = []
        rows: List[List[int]] = []
        for bb in self.cone_keep:
            A_full.append(A_orig[bb])
            rows.append(rows_orig[bb])
        row_norm2 = np.einsum("ji,ji->j", A_free, A_free)
        for bidx in range(self.nb):
            for M, j in zip(A_full[bidx], rows[bidx]):
                row_norm2[j] += float(np.sum(M * M))

        keep = row_norm2 > 0.0
        self.trivially_infeasible_row = None
        for j in range(m_in):
            if not keep[j] and b[j] != 0.0:
                self.trivially_infeasible_row = j
                break
        self.kept = np.flatnonzero(keep)
        self.m_in = m_in
        old_to_new = -np.ones(m_in, dtype=int)
        old_to_new[self.kept] = np.arange(len(self.kept))
        m = len(self.kept)

        self.norm_b_orig = float(np.linalg.norm(b[self.kept]))
        self.norm_c_orig = math.sqrt(
            sum(float(np.sum(Cb * Cb)) for Cb in C) + float(c_free @ c_free)
        )

        # row scaling: divide each kept row (and its rhs) by max(1, row norm)
        self.row_scale = np.maximum(1.0, np.sqrt(row_norm2[self.kept]))
        self.b = b[self.kept] / self.row_scale
        self.A_free = A_free[self.kept] / self.row_scale[:, None]

        # objective scaling
        self.obj_scale = max(
            1.0,
            max((float(np.max(np.abs(Cb))) for Cb in C if Cb.size), default=0.0),
            float(np.max(np.abs(c_free))) if self.nf else 0.0,
        )
        self.C = [Cb / self.obj_scale for Cb in C]
        self.c_free = c_free / self.obj_scale

        self.block_rows: List[np.ndarray] = []
        self.A: List[np.ndarray] = []   # per block: (mb, d, d), row-scaled
        for bidx in range(self.nb):
            r = np.array([old_to_new[j] for j in rows[bidx]], dtype=int)
            stack = (
                np.stack(A_full[bidx])
                if A_full[bidx]
                else np.zeros((0, self.dims[bidx], self.dims[bidx]))
            )
            stack = stack / self.row_scale[r][:, None, None] if len(r) else stack
            self.block_rows.append(r)
            self.A.append(stack)

        self.m = m
        self._reduce_dependent_rows()
        m = self.m

        # unconstrained free variables cannot stay in the interior-point system
        col_used = (
            np.any(self.A_free != 0.0, axis=0)
            if m
            else np.zeros(self.nf, dtype=bool)
        )
        self.free_unbounded_index = None
        for i in range(self.nf):
            if not col_used[i] and self.c_free[i] != 0.0:
                self.free_unbounded_index = i
                break
        user_keep = np.flatnonzero(col_used[: self.nf_user])
        extra_keep = self.nf_user + np.flatnonzero(col_used[self.nf_user :])
        # Merged-difference coordinates need not be independent: a Gram
        # matrix with larger than degree-one basis maps several entries to
        # the same product monomial, so their columns coincide and the
        # bordered Newton system would be exactly singular.  A dependent
        # column is only safe to drop (pin to zero) when its representation
        # over the kept columns carries zero cost; the feasible set and the
        # objective are then both unchanged.  A cost-bearing dependency is
        # instead an exact improving ray: shifting along it moves no
        # constraint yet changes the objective, so the problem is certified
        # unbounded before any iteration runs.
        self.presolve_dual_ray: Optional[np.ndarray] = None
        if len(extra_keep):
            U = self.A_free[:, user_keep]
            E = self.A_free[:, extra_keep]
            Ep = E
            if U.size:
                Qu, _ = qr(U, mode="economic")
                Ep = E - Qu @ (Qu.T @ E)
            Re, pive = qr(Ep, mode="r", pivoting=True)
            Re = np.atleast_2d(Re)
            de = np.abs(np.diag(Re))
            rank_e = int(np.sum(de > 1e-10 * max(de[0] if len(de) else 0.0, 1.0)))
            keep_mask = np.ones(len(extra_keep), dtype=bool)
            if rank_e < len(pive):
                piv_cols = pive[:rank_e]
                drop_cols = pive[rank_e:]
                rep = (
                    np.linalg.lstsq(Ep[:, piv_cols], Ep[:, drop_cols], rcond=None)[0]
                    if rank_e
                    else np.zeros((0, len(drop_cols)))
                )
                resid = E[:, drop_cols] - E[:, piv_cols] @ rep
                if U.size:
                    u_rep = np.linalg.lstsq(U, resid, rcond=None)[0]
                    resid = resid - U @ u_rep
                else:
                    u_rep = np.zeros((len(user_keep), len(drop_cols)))
                res_norm = np.linalg.norm(resid, axis=0)
                col_norm = np.linalg.norm(E[:, drop_cols], axis=0)
                gains = self.c_free[user_keep] @ u_rep
                for t, j in enumerate(drop_cols):
                    if res_norm[t] > 1e-10 * (1.0 + col_norm[t]):
                        continue  # not dependent to working precision: keep
                    weight = 1.0 + float(
                        np.sum(np.abs(rep[:, t])) + np.sum(np.abs(u_rep[:, t]))
                    )
                    if abs(gains[t]) <= 1e-9 * weight:
                        keep_mask[j] = False
                        continue
                    ray = np.zeros(self.nf)
                    ray[extra_keep[piv_cols]] = rep[:, t]
                    ray[user_keep] = u_rep[:, t]
                    ray[extra_keep[j]] = -1.0
                    scale = self.obj_scale * abs(float(gains[t]))
                    self.presolve_dual_ray = (
                        -ray / scale if gains[t] > 0.0 else ray / scale
                    )
                    break
            extra_keep = extra_keep[keep_mask]
        self.free_keep = np.concatenate([user_keep, extra_keep])
        self.A_free = self.A_free[:, self.free_keep]
        self.c_free_kept = self.c_free[self.free_keep]
        self.nu = sum(self.dims)

    def _reduce_dependent_rows(self) -> None:
        """Drop rows lying in the span of the others, or certify infeasibility.

        Coefficient-matching systems are rank-deficient whenever a slice of
        the monomial range is reachable through only a few generators, so
        dependent rows are structural here, not pathological, and they make
        the Schur complement singular.  Pivoted QR on the Gram matrix of
        unit-normalized rows picks a maximal independent subset; each
        dropped row must then be a consistent combination of the kept ones,
        otherwise the dependency coefficients form an exact Farkas
        certificate (A^T y = 0 with b^T y = 1 and zero slacks).
        """
        m = self.m
        self.dependent_infeasible_y = None
        if m <= 1:
            return
        G = np.zeros((m, m))
        for bidx in range(self.nb):
            r = self.block_rows[bidx]
            if len(r):
                flat = self.A[bidx].reshape(len(r), -1)
                G[np.ix_(r, r)] += flat @ flat.T
        if self.A_free.size:
            G += self.A_free @ self.A_free.T
        norms = np.sqrt(np.diag(G))
        Gn = G / np.outer(norms, norms)
        R, piv = qr(Gn, mode="r", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > 1e-11 * max(diag[0], 1.0)))
        if rank >= m:
            return

        keep = np.sort(piv[:rank])
        drop = np.sort(piv[rank:])
        bn = self.b / norms
        GKK = Gn[np.ix_(keep, keep)]
        GKD = Gn[np.ix_(keep, drop)]
        try:
            coeffs = cho_solve(cho_factor(GKK), GKD)
        except np.linalg.LinAlgError:
            coeffs, *_ = np.linalg.lstsq(GKK, GKD, rcond=None)
        scale = 1.0 + float(np.max(np.abs(bn)))
        for t, d in enumerate(drop):
            res = float(bn[d] - coeffs[:, t] @ bn[keep])
            if abs(res) <= 1e-7 * scale * (1.0 + float(np.sum(np.abs(coeffs[:, t])))):
                continue
            y_local = np.zeros(m)
            y_local[d] = 1.0 / norms[d]
            y_local[keep] = -coeffs[:, t] / norms[keep]
            y_full = np.zeros(self.m_in)
            y_full[self.kept] = (y_local / res) / self.row_scale
            self.dependent_infeasible_y = y_full
            return

        old_to_new = -np.ones(m, dtype=int)
        old_to_new[keep] = np.arange(rank)
        self.kept = self.kept[keep]
        self.b = self.b[keep]
        self.row_scale = self.row_scale[keep]
        self.A_free = self.A_free[keep]
        self.norm_b_orig = float(np.linalg.norm(self.b * self.row_scale))
        for bidx in range(self.nb):
            r = self.block_rows[bidx]
            if len(r):
                mask = old_to_new[r] >= 0
                self.block_rows[bidx] = old_to_new[r[mask]]
                self.A[bidx] = self.A[bidx][mask]
        self.m = rank

    # -- small helpers over the block structure --

    def apply_A(self, X: List[np.ndarray], z: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m)
        for bidx in range(self.nb):
            r = self.block_rows[bidx]
            if len(r):
                mb = len(r)
                out[r] += self.A[bidx].reshape(mb, -1) @ X[bidx].ravel()
        if self.A_free.size:
            out += self.A_free @ z
        return out

    def apply_AT(self, y: np.ndarray) -> List[np.ndarray]:
        out = []
        for bidx in range(self.nb):
            r = self.block_rows[bidx]
            d = self.dims[bidx]
            if len(r):
                mb = len(r)
                out.append((self.A[bidx].reshape(mb, -1).T @ y[r]).reshape(d, d))
            else:
                out.append(np.zeros((d, d)))
        return out

    def inner_c(self, X: List[np.ndarray], z: np.ndarray) -> float:
        total = sum(float(np.sum(self.C[b] * X[b])) for b in range(self.nb))
        if len(z):
            total += float(self.c_free_kept @ z)
        return total

    # -- reporting helpers: map internal solutions back to original blocks --

    def expand_free(self, z_kept: np.ndarray) -> np.ndarray:
        z_full = np.zeros(self.nf)
        z_full[self.free_keep] = z_kept
        return z_full

    def expand_blocks(
        self, X: List[np.ndarray], z_full: np.ndarray
    ) -> List[np.ndarray]:
        """Original-order primal blocks, splitting merged differences PSD."""
        out: List[np.ndarray] = [None] * len(self.orig_dims)  # type: ignore[list-item]
        for pos, bb in enumerate(self.cone_keep):
            out[bb] = X[pos]
        for pair in self.merged_pairs:
            d = pair["dim"]
            coords = z_full[pair["zstart"] : pair["zstart"] + d * (d + 1) // 2]
            D = np.zeros((d, d))
            iu = np.triu_indices(d)
            D[iu] = coords
            D = D + D.T - np.diag(np.diag(D))
            w, V = np.linalg.eigh(D)
            out[pair["plus"]] = (V * np.maximum(w, 0.0)) @ V.T
            out[pair["minus"]] = (V * np.maximum(-w, 0.0)) @ V.T
        return out

    def expand_slacks(
        self, S: List[np.ndarray], y_full: np.ndarray
    ) -> List[np.ndarray]:
        """Original-order dual slacks; merged pairs carry -+ A^T y exactly."""
        out: List[np.ndarray] = [None] * len(self.orig_dims)  # type: ignore[list-item]
        for pos, bb in enumerate(self.cone_keep):
            out[bb] = S[pos]
        for pair in self.merged_pairs:
            Sp = -np.einsum("j,jkl->kl", y_full[pair["rows"]], pair["stack"])
            out[pair["plus"]] = Sp
            out[pair["minus"]] = -Sp
        return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _max_step(L: np.ndarray, dM: np.ndarray) -> float:
    """Largest alpha with M + alpha*dM PSD, given M = L L^T (Cholesky)."""
    T = np.linalg.solve(L, dM)
    T = np.linalg.solve(L, T.T)
    lam_min = float(eigvalsh((T + T.T) / 2.0)[0])
    if lam_min >= -1e-300:
        return math.inf
    return -1.0 / lam_min


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """NT scaling point: returns (G, Ginv, W, sig) with G^-1 X G^-T = G^T S G = diag(sig)."""
    Lx = cholesky(X, lower=True)
    Ls = cholesky(S, lower=True)
    _, sig, Vt = svd(Ls.T @ Lx)
    sqrt_sig = np.sqrt(sig)
    G = (Lx @ Vt.T) / sqrt_sig[None, :]
    Lx_inv = np.linalg.solve(Lx, np.eye(Lx.shape[0]))
    Ginv = (Vt * sqrt_sig[:, None]) @ Lx_inv
    W = G @ G.T
    return G, Ginv, W, sig


def solve_sdp(problem: SDPProblem, options: SDPOptions | None = None) -> SDPSolution:
    """Solve the block SDP; see the module docstring for the problem form."""
    opts = options or SDPOptions()
    data = _Compiled(problem)

    if data.trivially_infeasible_row is not None:
        j = data.trivially_infeasible_row
        y = np.zeros(data.m_in)
        y[j] = 1.0 / problem.constraints[j].rhs
        slacks = data.expand_slacks([np.zeros((d, d)) for d in data.dims], y)
        return SDPSolution(
            status=SDPStatus.PRIMAL_INFEASIBLE,
            iterations=0,
            certificate={"type": "primal_infeasible", "y": y, "slacks": slacks},
            message=f"constraint {j} has empty left-hand side and nonzero rhs",
        )
    if data.dependent_infeasible_y is not None:
        y = data.dependent_infeasible_y
        slacks = data.expand_slacks([np.zeros((d, d)) for d in data.dims], y)
        return SDPSolution(
            status=SDPStatus.PRIMAL_INFEASIBLE,
            iterations=0,
            certificate={"type": "primal_infeasible", "y": y, "slacks": slacks},
            message="linearly dependent rows with inconsistent right-hand sides",
        )
    if data.free_unbounded_index is not None:
        i = data.free_unbounded_index
        z = np.zeros(data.nf_user)
        z[i] = -math.copysign(1.0, data.c_free[i])
        return SDPSolution(
            status=SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED,
            iterations=0,
            certificate={
                "type": "dual_infeasible",
                "blocks": [np.zeros((d, d)) for d in data.orig_dims],
                "free": z,
            },
            message=f"free variable {i} is unconstrained with a nonzero cost",
        )
    if data.presolve_dual_ray is not None:
        zf = data.presolve_dual_ray
        blocks = data.expand_blocks([np.zeros((d, d)) for d in data.dims], zf)
        sol = SDPSolution(
            status=SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED,
            iterations=0,
            certificate={
                "type": "dual_infeasible",
                "blocks": blocks,
                "free": zf[: data.nf_user],
            },
            message="improving ray along linearly dependent free columns",
        )
        if certificate_residual(problem, sol) <= opts.cert_tol:
            return sol
    if data.m == 0:
        return _solve_unconstrained(problem, data, opts)

    m, nfk, nu = data.m, len(data.free_keep), data.nu
    X = [np.eye(d) for d in data.dims]
    S = [np.eye(d) for d in data.dims]
    z = np.zeros(nfk)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    def residuals():
        Rp = data.apply_A(X, z) - data.b * tau
        ATy = data.apply_AT(y)
        Rd = [data.C[b] * tau - ATy[b] - S[b] for b in range(data.nb)]
        Rdf = data.c_free_kept * tau - data.A_free.T @ y
        ctx = data.inner_c(X, z)
        Rg = float(data.b @ y) - ctx - kappa
        return Rp, Rd, Rdf, Rg, ctx

    Rp, Rd, Rdf, Rg, ctx = residuals()
    hr_p0 = max(1.0, float(np.linalg.norm(Rp)))
    hr_d0 = max(
        1.0,
        math.sqrt(sum(float(np.sum(M * M)) for M in Rd) + float(Rdf @ Rdf)),
    )
    hr_g0 = max(1.0, abs(Rg))

    feas_tol = opts.feas()
    stall = 0
    iterations = 0
    best_score = math.inf
    best_iterate = None

    def pack_optimal(Xp, Sp, zp, yp, taup, message=""):
        Xh = [Xb / taup for Xb in Xp]
        zh_kept = zp / taup
        zh = data.expand_free(zh_kept)
        y_orig = np.zeros(data.m_in)
        y_orig[data.kept] = data.obj_scale * (yp / taup) / data.row_scale
        Sh = data.expand_slacks(
            [data.obj_scale * Sb / taup for Sb in Sp], y_orig
        )
        pobj = data.obj_scale * data.inner_c(Xh, zh_kept)
        dobj = data.obj_scale * float(data.b @ yp) / taup
        return SDPSolution(
            status=SDPStatus.OPTIMAL,
            iterations=iterations,
            primal_objective=pobj,
            dual_objective=dobj,
            blocks=data.expand_blocks(Xh, zh),
            free=zh[: data.nf_user],
            y=y_orig,
            dual_slacks=Sh,
            message=message,
        )

    def bail(status, message):
        # degenerate instances often stagnate a hair above the target
        # tolerances; the best recorded iterate is then still a perfectly
        # usable optimum at reduced accuracy
        if best_iterate is not None and best_score <= opts.reduced_tol:
            return pack_optimal(
                *best_iterate,
                message=f"reduced accuracy ({best_score:.1e}) after: {message}",
            )
        return SDPSolution(status=status, iterations=iterations, message=message)

    for iterations in range(opts.max_iter + 1):
        Rp, Rd, Rdf, Rg, ctx = residuals()
        mu = (
            sum(float(np.sum(X[b] * S[b])) for b in range(data.nb)) + tau * kappa
        ) / (nu + 1)

        # optimality, measured on the de-homogenized iterate in original units
        norm_rp = float(np.linalg.norm(data.row_scale * Rp))
        pres = norm_rp / tau / (1.0 + data.norm_b_orig)
        norm_rd = math.sqrt(
            sum(float(np.sum(M * M)) for M in Rd) + float(Rdf @ Rdf)
        )
        dres = data.obj_scale * norm_rd / tau / (1.0 + data.norm_c_orig)
        pobj = data.obj_scale * ctx / tau
        dobj = data.obj_scale * float(data.b @ y) / tau
        if opts.verbose:
            print(
                f"  it {iterations:3d}  mu {mu:9.2e}  tau {tau:9.2e}  "
                f"kap {kappa:9.2e}  pres {pres:9.2e}  dres {dres:9.2e}  "
                f"gap {abs(pobj - dobj):9.2e}  pobj {pobj:12.5e}",
                file=sys.stderr,
            )
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj))
        if pres <= feas_tol and dres <= feas_tol and relgap <= opts.gap_tol:
            return pack_optimal(X, S, z, y, tau)
        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best_iterate = (
                [Xb.copy() for Xb in X],
                [Sb.copy() for Sb in S],
                z.copy(),
                y.copy(),
                tau,
            )

        # infeasibility: the homogeneous residuals vanished but tau -> 0
        hr_p = float(np.linalg.norm(Rp)) / hr_p0
        hr_d = norm_rd / hr_d0
        hr_g = abs(Rg) / hr_g0
        itol = opts.infeas_tol
        hom_small = hr_p <= itol and hr_d <= itol and hr_g <= itol
        if (hom_small and tau <= itol * max(1.0, kappa)) or (
            mu <= itol * 1.0 and tau <= itol * min(1.0, kappa)
        ):
            sol = _classify_ray(problem, data, X, z, y, S, opts, iterations)
            if sol is not None:
                return sol
            return SDPSolution(
                status=SDPStatus.NUMERICAL_FAILURE,
                iterations=iterations,
                message="tau collapsed but no improving-ray certificate verified",
            )

        if iterations == opts.max_iter:
            break

        # Nesterov-Todd scaling per block
        try:
            nt = [_nt_scaling(X[b], S[b]) for b in range(data.nb)]
        except np.linalg.LinAlgError:
            return bail(
                SDPStatus.NUMERICAL_FAILURE,
                "Cholesky breakdown while computing the NT scaling",
            )

        # Schur complement M_ij = sum_b <A_i, W A_j W>, bordered by free columns
        M = np.zeros((m, m))
        h_c = np.zeros(m)
        q_cc = 0.0
        WA = []
        WCW = []
        for bidx in range(data.nb):
            _, _, W, _ = nt[bidx]
            r = data.block_rows[bidx]
            Ab = data.A[bidx]
            if len(r):
                U = W @ Ab @ W            # (mb, d, d)
                mb = len(r)
                M[np.ix_(r, r)] += Ab.reshape(mb, -1) @ U.reshape(mb, -1).T
                WA.append(U)
            else:
                WA.append(np.zeros_like(Ab))
            Cw = W @ data.C[bidx] @ W
            WCW.append(Cw)
            if len(r):
                h_c[r] += Ab.reshape(len(r), -1) @ Cw.ravel()
            q_cc += float(np.sum(data.C[bidx] * Cw))
        M = (M + M.T) / 2.0

        K = np.zeros((m + nfk, m + nfk))
        K[:m, :m] = M
        if nfk:
            K[:m, m:] = data.A_free
            K[m:, :m] = data.A_free.T
        try:
            lu = lu_factor(K)
        except ValueError:
            return bail(SDPStatus.NUMERICAL_FAILURE, "singular reduced KKT system")

        def ksolve(rhs):
            # two rounds of iterative refinement keep the bordered solve
            # usable when the Schur block dwarfs the free-variable border
            w = lu_solve(lu, rhs)
            for _ in range(2):
                w += lu_solve(lu, rhs - K @ w)
            return w

        rhs1 = np.concatenate([data.b + h_c, data.c_free_kept])
        w1 = ksolve(rhs1)
        w1y, w1z = w1[:m], w1[m:]
        denom_const = (
            float((data.b - h_c) @ w1y)
            - (float(data.c_free_kept @ w1z) if nfk else 0.0)
            + q_cc
            + kappa / tau
        )

        def direction(gamma, eta, Rc, r_tk):
            ARc = np.zeros(m)
            AWRdW = np.zeros(m)
            q_cr = 0.0
            c_rc = 0.0
            WRdW = []
            for bidx in range(data.nb):
                _, _, W, _ = nt[bidx]
                r = data.block_rows[bidx]
                Rw = W @ Rd[bidx] @ W
                WRdW.append(Rw)
                c_rc += float(np.sum(data.C[bidx] * Rc[bidx]))
                q_cr += float(np.sum(data.C[bidx] * Rw))
                if len(r):
                    mb = len(r)
                    Af = data.A[bidx].reshape(mb, -1)
                    ARc[r] += Af @ Rc[bidx].ravel()
                    AWRdW[r] += Af @ Rw.ravel()
            r1 = -eta * Rp - ARc + eta * AWRdW
            r2 = eta * Rdf
            r3 = -eta * Rg + c_rc - eta * q_cr + r_tk / tau
            w2 = ksolve(np.concatenate([r1, r2]))
            w2y, w2z = w2[:m], w2[m:]
            num = (
                r3
                - float((data.b - h_c) @ w2y)
                + (float(data.c_free_kept @ w2z) if nfk else 0.0)
            )
            dtau = num / denom_const
            dy = w2y + dtau * w1y
            dz = w2z + dtau * w1z
            ATdy = data.apply_AT(dy)
            dS = [
                data.C[b] * dtau - ATdy[b] + eta * Rd[b] for b in range(data.nb)
            ]
            dX = []
            for bidx in range(data.nb):
                _, _, W, _ = nt[bidx]
                dX.append(Rc[bidx] - W @ dS[bidx] @ W)
            dkappa = (r_tk - kappa * dtau) / tau
            return dX, dS, dz, dy, dtau, dkappa

        # predictor: gamma = 0, eta = 1, target complementarity 0
        Rc_aff = [-X[b] for b in range(data.nb)]
        try:
            aff = direction(0.0, 1.0, Rc_aff, -tau * kappa)
        except ValueError:
            return bail(
                SDPStatus.NUMERICAL_FAILURE, "linear solve failed in predictor step"
            )
        if not _finite(aff):
            return bail(SDPStatus.NUMERICAL_FAILURE, "non-finite predictor direction")
        dXa, dSa, dza, dya, dtaua, dkappaa = aff

        alpha_aff = 1.0
        try:
            for bidx in range(data.nb):
                Lx = cholesky(X[bidx], lower=True)
                Ls = cholesky(S[bidx], lower=True)
                alpha_aff = min(alpha_aff, opts.step_fraction * _max_step(Lx, dXa[bidx]))
                alpha_aff = min(alpha_aff, opts.step_fraction * _max_step(Ls, dSa[bidx]))
        except np.linalg.LinAlgError:
            return bail(SDPStatus.NUMERICAL_FAILURE, "iterate left the cone")
        if dtaua < 0:
            alpha_aff = min(alpha_aff, opts.step_fraction * (-tau / dtaua))
        if dkappaa < 0:
            alpha_aff = min(alpha_aff, opts.step_fraction * (-kappa / dkappaa))

        inner_aff = 0.0
        for bidx in range(data.nb):
            inner_aff += float(
                np.sum((X[bidx] + alpha_aff * dXa[bidx]) * (S[bidx] + alpha_aff * dSa[bidx]))
            )
        inner_aff += (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa)
        mu_aff = inner_aff / (nu + 1)
        gamma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
        eta = 1.0 - gamma

        # corrector in the scaled (v-) space
        Rc = []
        for bidx in range(data.nb):
            G, Ginv, _, sig = nt[bidx]
            dXt = Ginv @ dXa[bidx] @ Ginv.T
            dSt = G.T @ dSa[bidx] @ G
            H = (dXt @ dSt + dSt @ dXt) / 2.0
            Rv = -H + np.diag(gamma * mu - sig**2)
            D = (sig[:, None] + sig[None, :]) / 2.0
            Rc.append(G @ (Rv / D) @ G.T)
        r_tk = gamma * mu - tau * kappa - dtaua * dkappaa
        try:
            corr = direction(gamma, eta, Rc, r_tk)
        except ValueError:
            return bail(
                SDPStatus.NUMERICAL_FAILURE, "linear solve failed in corrector step"
            )
        if not _finite(corr):
            return bail(SDPStatus.NUMERICAL_FAILURE, "non-finite corrector direction")
        dX, dS, dz, dy, dtau, dkappa = corr

        alpha = 1.0
        try:
            for bidx in range(data.nb):
                Lx = cholesky(X[bidx], lower=True)
                Ls = cholesky(S[bidx], lower=True)
                alpha = min(alpha, opts.step_fraction * _max_step(Lx, dX[bidx]))
                alpha = min(alpha, opts.step_fraction * _max_step(Ls, dS[bidx]))
        except np.linalg.LinAlgError:
            return bail(SDPStatus.NUMERICAL_FAILURE, "iterate left the cone")
        if dtau < 0:
            alpha = min(alpha, opts.step_fraction * (-tau / dtau))
        if dkappa < 0:
            alpha = min(alpha, opts.step_fraction * (-kappa / dkappa))

        if alpha < 1e-8:
            stall += 1
            if stall >= 3:
                return bail(SDPStatus.NUMERICAL_FAILURE, "step length collapsed")
        else:
            stall = 0

        for bidx in range(data.nb):
            X[bidx] = X[bidx] + alpha * dX[bidx]
            X[bidx] = (X[bidx] + X[bidx].T) / 2.0
            S[bidx] = S[bidx] + alpha * dS[bidx]
            S[bidx] = (S[bidx] + S[bidx].T) / 2.0
        z = z + alpha * dz
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa

    return bail(
        SDPStatus.ITERATION_LIMIT,
        f"no convergence within {opts.max_iter} iterations",
    )


def _finite(direction) -> bool:
    dX, dS, dz, dy, dtau, dkappa = direction
    for M in (*dX, *dS):
        if not np.all(np.isfinite(M)):
            return False
    return (
        bool(np.all(np.isfinite(dz)))
        and bool(np.all(np.isfinite(dy)))
        and math.isfinite(dtau)
        and math.isfinite(dkappa)
    )


def _solve_unconstrained(problem: SDPProblem, data: _Compiled, opts: SDPOptions) -> SDPSolution:
    """No equality rows: the optimum is X=0, z=0 iff every cost block is PSD."""
    for bidx, Cb in enumerate(data.C):
        w, V = np.linalg.eigh(Cb)
        if w[0] < 0.0:
            ray = [np.zeros((d, d)) for d in data.orig_dims]
            v = V[:, 0]
            ray[data.cone_keep[bidx]] = np.outer(v, v)
            return SDPSolution(
                status=SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED,
                iterations=0,
                certificate={
                    "type": "dual_infeasible",
                    "blocks": ray,
                    "free": np.zeros(data.nf_user),
                },
                message="cost block has a negative eigenvalue and no constraints",
            )
    y_zero = np.zeros(data.m_in)
    return SDPSolution(
        status=SDPStatus.OPTIMAL,
        iterations=0,
        primal_objective=0.0,
        dual_objective=0.0,
        blocks=[np.zeros((d, d)) for d in data.orig_dims],
        free=np.zeros(data.nf_user),
        y=y_zero,
        dual_slacks=data.expand_slacks(
            [data.obj_scale * Cb for Cb in data.C], y_zero
        ),
    )


def _classify_ray(
    problem: SDPProblem,
    data: _Compiled,
    X: List[np.ndarray],
    z: np.ndarray,
    y: np.ndarray,
    S: List[np.ndarray],
    opts: SDPOptions,
    iterations: int,
) -> Optional[SDPSolution]:
    """Try to certify infeasibility from the homogeneous limit ray."""
    bty = float(data.b @ y)
    ctx = data.inner_c(X, z)

    if bty > 0.0:
        y_orig = np.zeros(data.m_in)
        y_orig[data.kept] = (y / bty) / data.row_scale
        slacks = data.expand_slacks([Sb / bty for Sb in S], y_orig)
        cert = {"type": "primal_infeasible", "y": y_orig, "slacks": slacks}
        sol = SDPSolution(
            status=SDPStatus.PRIMAL_INFEASIBLE,
            iterations=iterations,
            certificate=cert,
            message="primal infeasibility certified by a Farkas ray",
        )
        if certificate_residual(problem, sol) <= opts.cert_tol:
            return sol
    if ctx < 0.0:
        scale = -data.obj_scale * ctx   # original-unit improvement
        zf_full = data.expand_free(z / scale)
        blocks = data.expand_blocks([Xb / scale for Xb in X], zf_full)
        cert = {
            "type": "dual_infeasible",
            "blocks": blocks,
            "free": zf_full[: data.nf_user],
        }
        sol = SDPSolution(
            status=SDPStatus.DUAL_INFEASIBLE_OR_UNBOUNDED,
            iterations=iterations,
            certificate=cert,
            message="unboundedness certified by an improving ray",
        )
        if certificate_residual(problem, sol) <= opts.cert_tol:
            return sol
    return None


def certificate_residual(problem: SDPProblem, solution: SDPSolution) -> float:
    """Scaled residual of an infeasibility certificate against the raw data.

    For a primal-infeasibility (Farkas) ray y with b.y = 1 the residual
    measures how far -A^T y is from the returned PSD slacks; for a
    dual-infeasibility ray (X, z) with c.(X, z) = -1 it measures ||A (X, z)||
    and any negative eigenvalue of the ray blocks.  Both are normalized by
    the size of the terms involved, so a value <= 1e-6 means the ray
    certifies the status to roughly single-precision accuracy.
    """
    if solution.certificate is None:
        raise ValueError("solution carries no certificate")
    cert = solution.certificate
    dims = problem.block_dims
    A_mats = []
    for con in problem.constraints:
        A_mats.append(
            {
                bidx: _entries_to_matrix(dims[bidx], entries)
                for bidx, entries in con.blocks.items()
            }
        )
    if cert["type"] == "primal_infeasible":
        y = np.asarray(cert["y"], dtype=float)
        val = sum(con.rhs * y[j] for j, con in enumerate(problem.constraints))
        if not val > 0.0:
            return math.inf
        y = y / val
        combo = [np.zeros((d, d)) for d in dims]
        free_combo = np.zeros(problem.n_free)
        size = 1.0
        for j, con in enumerate(problem.constraints):
            if y[j] == 0.0:
                continue
            for bidx, M in A_mats[j].items():
                combo[bidx] += y[j] * M
            for i, v in con.free.items():
                free_combo[i] += y[j] * v
            size += abs(y[j]) * math.sqrt(
                sum(float(np.sum(M * M)) for M in A_mats[j].values())
                + sum(v * v for v in con.free.values())
            )
        res2 = float(free_combo @ free_combo)
        for bidx in range(len(dims)):
            R = combo[bidx] + cert["slacks"][bidx] / val
            res2 += float(np.sum(R * R))
            w = np.linalg.eigvalsh(cert["slacks"][bidx])
            res2 += min(0.0, float(w[0])) ** 2
        return math.sqrt(res2) / size
    if cert["type"] == "dual_infeasible":
        blocks = cert["blocks"]
        free = np.asarray(cert["free"], dtype=float)
        improvement = sum(
            float(np.sum(_entries_to_matrix(dims[b], e) * blocks[b]))
            for b, e in problem.block_costs.items()
        ) + sum(problem.free_costs.get(i, 0.0) * free[i] for i in range(problem.n_free))
        if not improvement < 0.0:
            return math.inf
        scale = -improvement
        size = 1.0 + (
            math.sqrt(
                sum(float(np.sum(B * B)) for B in blocks) + float(free @ free)
            )
            / scale
        )
        res2 = 0.0
        for j, con in enumerate(problem.constraints):
            rj = sum(
                float(np.sum(M * blocks[bidx]))
                for bidx, M in A_mats[j].items()
            ) + sum(v * free[i] for i, v in con.free.items())
            res2 += (rj / scale) ** 2
        for B in blocks:
            w = np.linalg.eigvalsh((B + B.T) / 2.0)
            res2 += (min(0.0, float(w[0])) / scale) ** 2
        return math.sqrt(res2) / size
    raise ValueError(f"unknown certificate type {cert['type']!r}")


# ---------------------------------------------------------------------------
# debug export
# ---------------------------------------------------------------------------


def write_sdpa(problem: SDPProblem, path: str) -> None:
    """Dump the problem in SDPA sparse format (.dat-s) for external checking.

    The SDPA dual  max <F0,Y> s.t. <Fk,Y> = ck, Y PSD  matches our primal
    with Fk = A_k, ck = b_k, F0 = -C.  Free scalars are encoded as u - v
    with u, v >= 0 in a trailing diagonal block (negative block size), the
    usual workaround since the format has no free cone.
    """
    dims = list(problem.block_dims)
    nf = problem.n_free
    blocks = [str(d) for d in dims]
    if nf:
        blocks.append(str(-2 * nf))
    lines = [
        '"exported by polybnb.sdp.write_sdpa"',
        f"{len(problem.constraints)} = mDIM",
        f"{len(blocks)} = nBLOCK",
        "(" + ", ".join(blocks) + ") = bLOCKsTRUCT",
    ]
    lines.append(
        "{" + ", ".join(f"{con.rhs:.17g}" for con in problem.constraints) + "}"
    )

    def entry(k: int, blk: int, i: int, j: int, v: float) -> str:
        return f"{k} {blk} {i} {j} {v:.17g}"

    out_entries: List[str] = []
    # F0 = -C
    for bidx, entries in sorted(problem.block_costs.items()):
        acc: Dict[Tuple[int, int], float] = {}
        for i, j, v in entries:
            a, b = (i, j) if i <= j else (j, i)
            acc[(a, b)] = acc.get((a, b), 0.0) + v
        for (i, j), v in sorted(acc.items()):
            if v != 0.0:
                out_entries.append(entry(0, bidx + 1, i + 1, j + 1, -v))
    for i, v in sorted(problem.free_costs.items()):
        if v != 0.0:
            out_entries.append(entry(0, len(dims) + 1, i + 1, i + 1, -v))
            out_entries.append(entry(0, len(dims) + 1, nf + i + 1, nf + i + 1, v))
    # Fk = A_k
    for k, con in enumerate(problem.constraints, start=1):
        for bidx, entries in sorted(con.blocks.items()):
            acc = {}
            for i, j, v in entries:
                a, b = (i, j) if i <= j else (j, i)
                acc[(a, b)] = acc.get((a, b), 0.0) + v
            for (i, j), v in sorted(acc.items()):
                if v != 0.0:
                    out_entries.append(entry(k, bidx + 1, i + 1, j + 1, v))
        for i, v in sorted(con.free.items()):
            if v != 0.0:
                out_entries.append(entry(k, len(dims) + 1, i + 1, i + 1, v))
                out_entries.append(entry(k, len(dims) + 1, nf + i + 1, nf + i + 1, -v))
    lines.extend(out_entries)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
