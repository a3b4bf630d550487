"""Independent reference answers: vertex enumeration, binary brute force, instance generators.

Nothing here touches the package's simplex or branch-and-bound code.
"""
from __future__ import annotations

import hashlib
import itertools
import math

import numpy as np
from scipy.optimize import linprog

from districtopt.milp import LinExpr, MilpModel, write_mps

BOX = 1e6  # artificial bound on free directions for vertex enumeration


# -- dense LP data ---------------------------------------------------------

def dense(model: MilpModel):
    """``(c, c0, A, row_lo, row_hi, lb, ub, isbin)`` with a dense ``A``."""
    c, c0, A, lo, hi, lb, ub, isbin = model.arrays()
    return c, c0, A.toarray(), lo, hi, lb, ub, isbin


def _halfspaces(A, lo, hi, lb, ub, box):
    """Rows ``g x <= h`` plus the equality mask; infinite sides are dropped."""
    n = A.shape[1]
    G, h, eq = [], [], []
    for a, l, u in zip(A, lo, hi):
        if l == u:
            G.append(a)
            h.append(u)
            eq.append(True)
            continue
        if math.isfinite(u):
            G.append(a)
            h.append(u)
            eq.append(False)
        if math.isfinite(l):
            G.append(-a)
            h.append(-l)
            eq.append(False)
    I = np.eye(n)
    for j in range(n):
        G.append(I[j])
        h.append(ub[j] if math.isfinite(ub[j]) else box)
        eq.append(False)
        G.append(-I[j])
        h.append(-lb[j] if math.isfinite(lb[j]) else box)
        eq.append(False)
    return np.array(G).reshape(-1, n), np.array(h), np.array(eq, bool)


def _best_vertex(c, G, h, eq, tol=1e-9):
    """Minimum of ``c x`` over vertices of ``{G x <= h, equality rows tight}``; None if empty."""
    k, n = G.shape
    best = None
    eq_idx = np.flatnonzero(eq)
    for combo in itertools.combinations(range(k), n):
        sub = G[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(combo)])
        r = G @ x - h
        scale = 1.0 + np.abs(h)
        if np.any(r > tol * scale):
            continue
        if eq_idx.size and np.any(np.abs(r[eq_idx]) > tol * scale[eq_idx]):
            continue
        v = float(c @ x)
        if best is None or v < best[0]:
            best = (v, x)
    return best


def lp_vertex_oracle(c, c0, A, lo, hi, lb, ub):
    """``(status, objective)`` by exhaustive vertex enumeration.

    Feasibility is decided inside a large artificial box. Unboundedness is
    decided by a second enumeration over the recession cone, normalized to
    the unit box: the LP is unbounded iff some recession direction improves
    the objective.
    """
    n = len(c)
    if n == 0:
        return "optimal", c0
    G, h, eq = _halfspaces(A, lo, hi, lb, ub, BOX)
    best = _best_vertex(c, G, h, eq)
    if best is None:
        return "infeasible", math.inf
    # recession cone: homogeneous rows, finite bounds become sign restrictions
    rlo = np.where(np.isfinite(lo), 0.0, -np.inf)
    rhi = np.where(np.isfinite(hi), 0.0, np.inf)
    dlb = np.where(np.isfinite(lb), 0.0, -1.0)
    dub = np.where(np.isfinite(ub), 0.0, 1.0)
    Gr, hr, eqr = _halfspaces(A, rlo, rhi, dlb, dub, 1.0)
    ray = _best_vertex(c, Gr, hr, eqr)
    if ray is not None and ray[0] < -1e-9:
        return "unbounded", -math.inf
    return "optimal", best[0] + c0


def milp_brute_force(model: MilpModel):
    """Fix every binary pattern, solve the remaining LP with HiGHS, keep the best.

    Returns ``(status, objective, pattern)``; status is "optimal" or "infeasible".
    """
    c, c0, A, lo, hi, lb, ub, isbin = dense(model)
    bins = np.flatnonzero(isbin)
    # one-sided rows for linprog
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for a, l, u in zip(A, lo, hi):
        if l == u:
            eq_rows.append(a)
            eq_rhs.append(u)
            continue
        if math.isfinite(u):
            ub_rows.append(a)
            ub_rhs.append(u)
        if math.isfinite(l):
            ub_rows.append(-a)
            ub_rhs.append(-l)
    kw = {}
    if ub_rows:
        kw.update(A_ub=np.array(ub_rows), b_ub=np.array(ub_rhs))
    if eq_rows:
        kw.update(A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs))
    best = (math.inf, None)
    for pattern in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo_b, hi_b = lb.copy(), ub.copy()
        ok = True
        for j, v in zip(bins, pattern):
            if not lb[j] <= v <= ub[j]:
                ok = False
                break
            lo_b[j] = hi_b[j] = v
        if not ok:
            continue
        bounds = [(None if not math.isfinite(a) else a, None if not math.isfinite(b) else b)
                  for a, b in zip(lo_b, hi_b)]
        res = linprog(c, bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-9,
                               "dual_feasibility_tolerance": 1e-9}, **kw)
        if res.status == 3:
            return "unbounded", -math.inf, pattern
        if res.status == 0 and res.fun < best[0]:
            best = (float(res.fun), pattern)
    if best[1] is None:
        return "infeasible", math.inf, None
    return "optimal", best[0] + c0, best[1]


def model_digest(model: MilpModel) -> str:
    return hashlib.sha256(write_mps(model)).hexdigest()[:16]


# -- generators ------------------------------------------------------------

def random_milp(seed: int) -> MilpModel:
    """At most 12 binaries, 30 continuous variables and 50 rows; feasible by construction."""
    rng = np.random.default_rng([20240601, seed])
    nb = int(rng.integers(0, 13))
    nc = int(rng.integers(1, 31))
    m = int(rng.integers(1, 51))
    n = nb + nc
    A = np.round(rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.3), 3)
    x0 = np.concatenate([rng.integers(0, 2, nb), rng.random(nc) * 3])
    act = A @ x0
    kind = rng.integers(0, 4, size=m)  # <=, >=, ranged, equality
    slack = np.round(rng.random(m) * 0.5, 3)
    c = np.round(rng.normal(size=n), 3)
    model = MilpModel(f"random_milp_{seed}")
    for j in range(n):
        if j < nb:
            model.add_variable(f"b{j}", 0, 1, binary=True)
        else:
            model.add_variable(f"x{j}", 0, 4)
    for i in range(m):
        e = LinExpr({j: A[i, j] for j in range(n) if A[i, j] != 0})
        if not e.terms:
            continue
        if kind[i] == 0:
            model.add_constraint(e, "<=", act[i] + slack[i])
        elif kind[i] == 1:
            model.add_constraint(e, ">=", act[i] - slack[i])
        elif kind[i] == 2:
            model.add_constraint(e, "<=", act[i] + slack[i])
            model.add_constraint(e.copy(), ">=", act[i] - slack[i] - 0.25)
        elif e.terms.keys() - set(range(nb)):
            # equality only through at least one continuous variable
            model.add_constraint(e, "==", act[i])
        else:
            model.add_constraint(e, "<=", act[i] + slack[i])
    model.set_objective(LinExpr({j: c[j] for j in range(n)}))
    return model


def random_lp(seed: int, mode: str = "feasible") -> MilpModel:
    """Small LP for vertex enumeration.

    ``feasible``: finite box bounds, rows built around a known interior point.
    ``mixed``: free variables and random rows; may be infeasible or unbounded.
    """
    rng = np.random.default_rng([7, seed, 0 if mode == "feasible" else 1])
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 7))
    A = np.round(rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7), 2)
    c = np.round(rng.normal(size=n), 2)
    model = MilpModel(f"random_lp_{mode}_{seed}")
    if mode == "feasible":
        x0 = rng.random(n) * 4
        for j in range(n):
            model.add_variable(f"x{j}", 0.0, float(np.round(4 + rng.random() * 4, 2)))
        act = A @ x0
        for i in range(m):
            e = LinExpr({j: A[i, j] for j in range(n) if A[i, j] != 0})
            if not e.terms:
                continue
            k = rng.integers(0, 4)
            if k == 0:
                model.add_constraint(e, "<=", round(act[i] + rng.random(), 2))
            elif k == 1:
                model.add_constraint(e, ">=", round(act[i] - rng.random(), 2))
            elif k == 2:
                model.add_constraint(e, "<=", round(act[i] + rng.random(), 2))
                model.add_constraint(e.copy(), ">=", round(act[i] - rng.random(), 2))
            else:
                model.add_constraint(e, "==", float(act[i]))
    else:
        for j in range(n):
            kind = rng.integers(0, 4)
            lb = -math.inf if kind == 0 else 0.0
            ub = math.inf if kind in (0, 1) else float(np.round(1 + rng.random() * 5, 2))
            model.add_variable(f"x{j}", lb, ub)
        for i in range(m):
            e = LinExpr({j: A[i, j] for j in range(n) if A[i, j] != 0})
            if not e.terms:
                continue
            rhs = float(np.round(rng.normal() * 3, 2))
            model.add_constraint(e, ("<=", ">=", "==")[rng.integers(0, 3)], rhs)
    model.set_objective(LinExpr({j: c[j] for j in range(n)}))
    return model


# -- power-to-gas state language --------------------------------------------

def p2g_runs(history: str, age, states):
    """Run-length encoding of history plus ``states``; ``age=None`` is an unbounded run."""
    runs = [[history, math.inf if age is None else age]]
    for s in states:
        if s == runs[-1][0]:
            runs[-1][1] += 1
        else:
            runs.append([s, 1])
    return runs


def reference_p2g_accepts(states, history="off", age=None, off_hot=1, hot_off=1) -> bool:
    """Legal OFF/HOT/ON trajectory, judged on whole runs.

    Consecutive runs may not pair OFF with ON; an OFF run leading into HOT
    must be at least ``off_hot`` long and a HOT run leading into OFF at
    least ``hot_off`` long.
    """
    if any(s not in ("off", "hot", "on") for s in states):
        return False
    runs = p2g_runs(history, age, states)
    for (a, n), (b, _) in zip(runs, runs[1:]):
        if {a, b} == {"off", "on"}:
            return False
        if (a, b) == ("off", "hot") and n < off_hot:
            return False
        if (a, b) == ("hot", "off") and n < hot_off:
            return False
    return True
