"""Bounded-variable revised primal simplex.

The problem is held as ``min c'x  s.t.  A x - r = 0,  lb <= x <= ub,
row_lo <= r <= row_hi`` where ``r`` are row-activity columns. The all-``r``
basis is always a valid start. Phase 1 minimizes the sum of bound
violations of the basic variables, so any basis (cold or inherited from a
branch-and-bound parent) can seed the solve without artificial columns.

The basis is kept as a sparse LU factorization plus a product-form eta
file, refactorized every ``REFACTOR`` pivots.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import kernels

logger = logging.getLogger(__name__)

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"

REFACTOR = 80
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
DEGENERATE_SWITCH = 40


class SimplexError(RuntimeError):
    """Numerical breakdown; carries basis diagnostics in the message."""


@dataclass
class Basis:
    head: np.ndarray     # column index basic in each row
    status: np.ndarray   # per-column status code


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    basis: Basis | None
    iterations: int


def _pow2_scale(v):
    out = np.ones_like(v)
    nz = v > 0
    out[nz] = np.exp2(-np.round(np.log2(v[nz])))
    return out


def equilibrate(A: sparse.csr_matrix, passes: int = 4):
    """Power-of-two row/column max-abs scaling factors ``(R, S)``."""
    m, n = A.shape
    R = np.ones(m)
    S = np.ones(n)
    if A.nnz == 0:
        return R, S
    M = abs(A).tocsr()
    for _ in range(passes):
        Ms = sparse.diags(R) @ M @ sparse.diags(S)
        rmax = np.asarray(Ms.max(axis=1).todense()).ravel()
        R *= _pow2_scale(rmax)
        Ms = sparse.diags(R) @ M @ sparse.diags(S)
        cmax = np.asarray(Ms.max(axis=0).todense()).ravel()
        S *= _pow2_scale(cmax)
    return R, S


class LpEngine:
    """Prepared (scaled) LP data; ``solve`` may be called repeatedly with new bounds."""

    def __init__(self, c, A, row_lo, row_hi, feas_tol: float = 1e-9, scale: bool = True):
        A = sparse.csr_matrix(A, dtype=float)
        self.m, self.n = A.shape
        if scale:
            self.R, self.S = equilibrate(A)
        else:
            self.R, self.S = np.ones(self.m), np.ones(self.n)
        As = (sparse.diags(self.R) @ A @ sparse.diags(self.S)).tocsc()
        As.sort_indices()
        self.As = As
        self.AsT = As.T.tocsr()
        self.Afull = sparse.hstack([As, -sparse.identity(self.m, format="csc")], format="csc")
        self.Afull.sort_indices()
        self.AfullT = self.Afull.T.tocsr()
        self.c = np.concatenate([np.asarray(c, float) * self.S, np.zeros(self.m)])
        self.row_lo = np.asarray(row_lo, float) * self.R
        self.row_hi = np.asarray(row_hi, float) * self.R
        self.tol = feas_tol
        self.N = self.n + self.m

    # -- basis handling -----------------------------------------------------

    def cold_basis(self, lb, ub) -> Basis:
        head = np.arange(self.n, self.N, dtype=np.int64)
        status = np.empty(self.N, dtype=np.int8)
        status[self.n:] = BASIC
        s = status[: self.n]
        s[:] = FREE
        s[np.isfinite(ub[: self.n])] = AT_UB
        s[np.isfinite(lb[: self.n])] = AT_LB
        return Basis(head, status)

    def _nonbasic_values(self, status, lb, ub):
        x = np.zeros(self.N)
        atl = status == AT_LB
        atu = status == AT_UB
        x[atl] = lb[atl]
        x[atu] = ub[atu]
        return x

    def tableau_rows(self, basis: Basis, positions) -> np.ndarray:
        """Rows ``positions`` of ``B^-1 [As | -I]`` (scaled space), shape ``(k, N)``."""
        lu = self._factor(basis.head)
        E = np.zeros((self.m, len(positions)))
        E[np.asarray(positions), np.arange(len(positions))] = 1.0
        rho = lu.solve(E, trans="T")
        return np.asarray((self.Afull.T @ rho).T)

    # -- main entry ---------------------------------------------------------

    def solve(self, lb, ub, basis: Basis | None = None, max_iter: int | None = None) -> LpResult:
        """Solve with structural bounds ``lb, ub`` (unscaled)."""
        n, m = self.n, self.m
        lbf = np.concatenate([np.asarray(lb, float) / self.S, self.row_lo])
        ubf = np.concatenate([np.asarray(ub, float) / self.S, self.row_hi])
        if np.any(lbf > ubf + self.tol):
            return LpResult(INFEASIBLE, None, np.inf, None, 0)
        if m == 0:
            return self._solve_unconstrained(lbf, ubf)
        if basis is None:
            basis = self.cold_basis(lbf, ubf)
        else:
            basis = Basis(basis.head.copy(), basis.status.copy())
            self._repair_status(basis, lbf, ubf)
        if max_iter is None:
            max_iter = 50 * (n + m) + 1000
        try:
            return self._run(lbf, ubf, basis, max_iter)
        except _Singular:
            logger.debug("singular warm basis, restarting cold")
            return self._run(lbf, ubf, self.cold_basis(lbf, ubf), max_iter)

    def _repair_status(self, basis, lbf, ubf):
        st = basis.status
        nb = st != BASIC
        fl, fu = np.isfinite(lbf), np.isfinite(ubf)
        bad_l = nb & (st == AT_LB) & ~fl
        st[bad_l & fu] = AT_UB
        st[bad_l & ~fu] = FREE
        bad_u = nb & (st == AT_UB) & ~fu
        st[bad_u & fl] = AT_LB
        st[bad_u & ~fl] = FREE
        fr = nb & (st == FREE)
        st[fr & fu] = AT_UB
        st[fr & fl] = AT_LB

    def _solve_unconstrained(self, lbf, ubf):
        c = self.c
        x = np.where(c > 0, lbf, np.where(c < 0, ubf, np.where(np.isfinite(lbf), lbf,
                                                                  np.where(np.isfinite(ubf), ubf, 0.0))))
        if not np.all(np.isfinite(x)):
            return LpResult(UNBOUNDED, None, -np.inf, None, 0)
        xs = x[: self.n] * self.S
        st = np.where(x == lbf, AT_LB, np.where(x == ubf, AT_UB, FREE)).astype(np.int8)
        return LpResult(OPTIMAL, xs, float(c @ x), Basis(np.zeros(0, np.int64), st), 0)

    # -- factorization ------------------------------------------------------

    def _factor(self, head):
        return _ReducedLU(self.As, self.n, head)

    def _run(self, lbf, ubf, basis: Basis, max_iter: int) -> LpResult:
        n, m = self.n, self.m
        head, status = basis.head, basis.status
        Af = self.Afull
        AfT = self.AfullT
        indptr, indices, data = Af.indptr, Af.indices, Af.data
        tol = self.tol
        cap = REFACTOR
        eta_row = np.zeros(cap, dtype=np.int64)
        eta_piv = np.zeros(cap)
        eta_ptr = np.zeros(cap + 1, dtype=np.int64)
        eta_idx = np.zeros(cap * m, dtype=np.int64)
        eta_val = np.zeros(cap * m)
        k = 0

        x = self._nonbasic_values(status, lbf, ubf)
        lu = None
        it = 0
        degenerate = 0
        bland = False
        recheck = 0

        def ftran(col):
            z = lu.solve(col)
            if k:
                kernels.eta_ftran(z, eta_row, eta_piv, eta_ptr, eta_idx, eta_val, k)
            return z

        def btran(cb):
            y = cb.copy()
            if k:
                kernels.eta_btran(y, eta_row, eta_piv, eta_ptr, eta_idx, eta_val, k)
            return lu.solve(y, trans="T")

        while True:
            if lu is None or k >= cap:
                lu = self._factor(head)
                k = 0
                x[head] = 0.0
                rhs = -(Af @ x)
                x[head] = lu.solve(rhs)
            it += 1
            if it > max_iter:
                raise SimplexError(
                    f"iteration limit {max_iter} reached (m={m}, n={n}, eta={k}, "
                    f"basic structurals={(head < n).sum()})")
            xb = x[head]
            lbb, ubb = lbf[head], ubf[head]
            below = xb < lbb - tol
            above = xb > ubb + tol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = above.astype(float) - below.astype(float)
                y = btran(cb)
                d = -(AfT @ y)
            else:
                y = btran(self.c[head])
                d = self.c - (AfT @ y)
            d[head] = 0.0
            j, dj = kernels.price(d, status, lbf, ubf, DUAL_TOL, bland)
            if j < 0:
                if recheck < 3 and k > 0 and (k > REFACTOR // 2 or _drift(Af, x) > tol):
                    # confirm on a fresh factorization before declaring the result
                    recheck += 1
                    lu = None
                    continue
                if phase1:
                    return LpResult(INFEASIBLE, None, np.inf, Basis(head, status), it)
                xs = x[:n] * self.S
                obj = float(self.c[:n] @ x[:n])
                return LpResult(OPTIMAL, xs, obj, Basis(head, status), it)
            direction = 1.0 if dj < 0 else -1.0
            col = np.zeros(m)
            a, b = indptr[j], indptr[j + 1]
            col[indices[a:b]] = data[a:b]
            alpha = ftran(col)
            r, theta, to_up = kernels.ratio_test(alpha, direction, xb, lbb, ubb, head,
                                                 tol, PIVOT_TOL, bland)
            span = ubf[j] - lbf[j]
            if span <= theta:
                # bound flip, basis unchanged
                if not np.isfinite(span):
                    if phase1:
                        raise SimplexError("phase 1 direction without a blocking row")
                    return LpResult(UNBOUNDED, None, -np.inf, Basis(head, status), it)
                x[head] = xb - direction * span * alpha
                if status[j] == AT_LB:
                    status[j] = AT_UB
                    x[j] = ubf[j]
                else:
                    status[j] = AT_LB
                    x[j] = lbf[j]
                degenerate = 0
                bland = False
                continue
            if r < 0:
                raise SimplexError("no blocking row for finite step")  # pragma: no cover
            piv = alpha[r]
            if abs(piv) < PIVOT_TOL:
                raise SimplexError(f"pivot {piv:.3e} too small at row {r}")
            leaving = head[r]
            x[head] = xb - direction * theta * alpha
            x[j] = x[j] + direction * theta
            if to_up:
                status[leaving] = AT_UB
                x[leaving] = ubf[leaving]
            else:
                status[leaving] = AT_LB
                x[leaving] = lbf[leaving]
            if not np.isfinite(x[leaving]):
                status[leaving] = FREE  # pragma: no cover
                x[leaving] = 0.0
            status[j] = BASIC
            head[r] = j
            # record eta
            nz = np.flatnonzero(alpha)
            nz = nz[nz != r]
            p0 = eta_ptr[k]
            p1 = p0 + nz.size
            eta_idx[p0:p1] = nz
            eta_val[p0:p1] = alpha[nz]
            eta_ptr[k + 1] = p1
            eta_row[k] = r
            eta_piv[k] = piv
            k += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate = 0
                bland = False


class _ReducedLU:
    """Factorization of ``B = [As[:, S] | -I[:, R]]`` through its structural block.

    Rows covered by basic row-activity columns drop out, leaving a square
    system ``As[Q, S]`` over the remaining rows ``Q``.
    """

    def __init__(self, As, n, head):
        m = As.shape[0]
        self.m = m
        pos_s = np.flatnonzero(head < n)
        pos_r = np.flatnonzero(head >= n)
        self.pos_s, self.pos_r = pos_s, pos_r
        self.rows_r = head[pos_r] - n
        covered = np.zeros(m, dtype=bool)
        covered[self.rows_r] = True
        if covered.sum() != pos_r.size:
            raise _Singular("repeated row-activity column in basis")
        self.rows_q = np.flatnonzero(~covered)
        cols = As[:, head[pos_s]].tocsr()
        self.a_q = cols[self.rows_q].tocsc()
        self.a_r = cols[self.rows_r].tocsr()
        self.a_rT = self.a_r.T.tocsr()
        self.lu = None
        if pos_s.size:
            try:
                self.lu = splu(self.a_q, permc_spec="COLAMD", options={"SymmetricMode": False})
            except RuntimeError as exc:
                raise _Singular(str(exc)) from None
            d = np.abs(self.lu.U.diagonal())
            if d.min() < 1e-11 * max(1.0, d.max()):
                raise _Singular("ill-conditioned basis")

    def solve(self, b, trans="N"):
        out = np.empty_like(b, dtype=float)
        if trans == "N":
            zs = self.lu.solve(b[self.rows_q]) if self.lu is not None else b[self.rows_q][:0]
            out[self.pos_s] = zs
            out[self.pos_r] = (self.a_r @ zs if zs.shape[0] else 0.0) - b[self.rows_r]
            return out
        y_r = -b[self.pos_r]
        out[self.rows_r] = y_r
        if self.lu is not None:
            rhs = b[self.pos_s] - self.a_rT @ y_r
            out[self.rows_q] = self.lu.solve(rhs, trans="T")
        return out


def _drift(Af, x) -> float:
    """Largest violation of ``A x - r = 0`` accumulated by the eta updates."""
    return float(np.abs(Af @ x).max(initial=0.0))


class _Singular(Exception):
    pass
