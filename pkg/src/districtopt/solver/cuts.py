"""Gomory mixed-integer cuts read off an optimal simplex tableau."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .simplex import AT_LB, AT_UB, BASIC, Basis, LpEngine

MIN_FRAC = 0.01
MAX_DYNAMISM = 1e8
ZERO = 1e-11


@dataclass
class Cut:
    coef: np.ndarray  # dense over structural variables
    rhs: float        # coef @ x >= rhs
    efficacy: float


def gmi_cuts(eng: LpEngine, basis: Basis, A: sparse.csr_matrix, row_lo, row_hi, lb, ub,
             isbin, x, int_tol: float = 1e-6, max_cuts: int = 50) -> list[Cut]:
    """Cuts violated by ``x`` (unscaled LP optimum of ``eng`` at ``basis``).

    Only global bounds ``lb, ub`` may be passed in: the cuts are valid for
    every integer point within them.
    """
    n, m = eng.n, eng.m
    head = basis.head
    status = basis.status
    cand = [p for p, v in enumerate(head)
            if v < n and isbin[v] and int_tol < x[v] - np.floor(x[v]) < 1 - int_tol]
    if not cand:
        return []
    xv = x[head[cand]]
    frac = xv - np.floor(xv)
    order = np.argsort(-np.minimum(frac, 1 - frac), kind="stable")
    cand = [cand[i] for i in order[: 4 * max_cuts]]
    rows = eng.tableau_rows(basis, cand)

    lo_all = np.concatenate([lb, row_lo])
    hi_all = np.concatenate([ub, row_hi])
    unscale = np.concatenate([1.0 / eng.S, eng.R])
    is_int = np.concatenate([isbin, np.zeros(m, bool)])
    nb = status != BASIC
    at_lb = status == AT_LB
    at_ub = status == AT_UB
    AT = A.T.tocsr()
    cuts = []
    for p, alpha in zip(cand, rows):
        v = head[p]
        a = alpha * unscale * eng.S[v]
        a[v] = 0.0
        a[np.abs(a) < ZERO] = 0.0
        a[~nb] = 0.0
        if np.any(a[nb & ~at_lb & ~at_ub] != 0.0):
            continue  # free nonbasic column
        fixed = nb & (lo_all == hi_all)
        bound = np.where(at_ub, hi_all, lo_all)
        use = (a != 0.0) & ~fixed
        beta = -float(a[a != 0.0] @ bound[a != 0.0])
        if abs(beta - x[v]) > 1e-6 * max(1.0, abs(x[v])):
            continue
        f0 = beta - np.floor(beta)
        if not MIN_FRAC < f0 < 1 - MIN_FRAC:
            continue
        abar = np.where(at_ub, -a, a)
        g = np.zeros_like(a)
        ii = use & is_int
        fj = abar[ii] - np.floor(abar[ii])
        g[ii] = np.minimum(fj / f0, (1 - fj) / (1 - f0))
        cc = use & ~is_int
        g[cc] = np.where(abar[cc] >= 0, abar[cc] / f0, -abar[cc] / (1 - f0))
        # back to original variables: y = x - lo  or  y = hi - x
        coef = np.where(at_ub, -g, g)
        rhs = 1.0 + float(g[use & at_lb] @ lo_all[use & at_lb]) - float(g[use & at_ub] @ hi_all[use & at_ub])
        cx = coef[:n] + AT @ coef[n:]
        cut = _clean(cx, rhs, lb, ub)
        if cut is None:
            continue
        cx, rhs = cut
        viol = rhs - float(cx @ x)
        norm = float(np.linalg.norm(cx))
        if norm == 0 or viol <= 1e-6 * max(1.0, abs(rhs)):
            continue
        cuts.append(Cut(cx, rhs, viol / norm))
    cuts.sort(key=lambda c: -c.efficacy)
    return _diverse(cuts, max_cuts)


def _clean(cx, rhs, lb, ub):
    big = np.abs(cx).max(initial=0.0)
    if big == 0 or not np.isfinite(big) or not np.isfinite(rhs):
        return None
    cx = cx / big
    rhs = rhs / big
    small = (np.abs(cx) < 1e-9) & (cx != 0)
    for j in np.flatnonzero(small):
        # relax a negligible term with the bound that keeps the cut valid
        bnd = lb[j] if cx[j] > 0 else ub[j]
        if not np.isfinite(bnd):
            return None
        rhs -= cx[j] * bnd
        cx[j] = 0.0
    nz = np.abs(cx[cx != 0])
    if nz.size == 0 or nz.max() / nz.min() > MAX_DYNAMISM:
        return None
    return cx, rhs


def _diverse(cuts: list[Cut], k: int, max_parallel: float = 0.98) -> list[Cut]:
    out: list[Cut] = []
    units = []
    for c in cuts:
        u = c.coef / np.linalg.norm(c.coef)
        if any(abs(float(u @ w)) > max_parallel for w in units):
            continue
        out.append(c)
        units.append(u)
        if len(out) >= k:
            break
    return out
