import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.optimize import linprog

from districtopt.milp import LinExpr, MilpModel, check_feasibility
from districtopt.solver import COMPILED, LpStatus, SolverConfig, solve_lp
from districtopt.solver import _kernels_py as pure
from districtopt.solver.simplex import LpEngine
from oracles import dense, lp_vertex_oracle, random_lp


def test_maximize_single_variable():
    m = MilpModel()
    x = m.add_variable("x", 0, math.inf)
    m.add_constraint(LinExpr.var(x), "<=", 3)
    m.set_objective(LinExpr.var(x, -1.0))
    sol = solve_lp(m)
    assert sol.status == LpStatus.OPTIMAL
    assert sol.values[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(-3.0)


def test_infeasible_pair():
    m = MilpModel()
    x = m.add_variable("x", -math.inf, math.inf)
    y = m.add_variable("y", 0, math.inf)
    m.add_constraint(LinExpr({x: 1, y: 1}), "<=", 1)
    m.add_constraint(LinExpr.var(x), ">=", 2)
    assert solve_lp(m).status == LpStatus.INFEASIBLE


def test_unbounded_ray():
    m = MilpModel()
    x = m.add_variable("x", 0, math.inf)
    y = m.add_variable("y", 0, math.inf)
    m.add_constraint(LinExpr({x: 1, y: -1}), "<=", 1)
    m.set_objective(LinExpr({x: -1.0}))
    assert solve_lp(m).status == LpStatus.UNBOUNDED


def test_binaries_are_relaxed():
    m = MilpModel()
    a = m.add_variable("a", 0, 1, binary=True)
    b = m.add_variable("b", 0, 1, binary=True)
    m.add_constraint(LinExpr({a: 2, b: 2}), "<=", 3)
    m.set_objective(LinExpr({a: -1.0, b: -1.0}))
    assert solve_lp(m).objective == pytest.approx(-1.5)


def test_objective_constant_is_carried():
    m = MilpModel()
    x = m.add_variable("x", 1, 2)
    m.set_objective(LinExpr({x: 1.0}, 10.0))
    assert solve_lp(m).objective == pytest.approx(11.0)


@pytest.mark.parametrize("seed", range(50))
def test_feasible_lps_match_vertex_enumeration(seed):
    model = random_lp(seed, "feasible")
    status, obj = lp_vertex_oracle(*dense(model)[:7])
    sol = solve_lp(model)
    assert sol.status.value == status == "optimal"
    assert sol.objective == pytest.approx(obj, abs=1e-6)
    assert check_feasibility(model, sol.values, feas_tol=1e-7) == []


@pytest.mark.parametrize("seed", range(60))
def test_status_classification_matches_vertex_enumeration(seed):
    model = random_lp(seed, "mixed")
    status, obj = lp_vertex_oracle(*dense(model)[:7])
    sol = solve_lp(model)
    assert sol.status.value == status
    if status == "optimal":
        assert sol.objective == pytest.approx(obj, abs=1e-6)


def _random_dense_lp(rng):
    n, m = int(rng.integers(1, 41)), int(rng.integers(1, 61))
    A = np.round(rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.4), 3)
    x0 = rng.random(n) * 3
    act = A @ x0
    sense = rng.integers(0, 4, size=m)
    lo = np.where(sense == 0, -np.inf, np.where(sense == 3, act, act - 1 - rng.random(m)))
    hi = np.where(sense == 1, np.inf, np.where(sense == 3, act, act + rng.random(m)))
    c = np.round(rng.normal(size=n), 3)
    ub = np.where(rng.random(n) < 0.8, 5.0, np.inf)
    return c, A, lo, hi, np.zeros(n), ub


def _highs(c, A, lo, hi, lb, ub):
    rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
    for a, l, u in zip(A, lo, hi):
        if l == u:
            rows_eq.append(a)
            rhs_eq.append(u)
            continue
        if np.isfinite(u):
            rows_ub.append(a)
            rhs_ub.append(u)
        if np.isfinite(l):
            rows_ub.append(-a)
            rhs_ub.append(-l)
    res = linprog(c, A_ub=np.array(rows_ub) if rows_ub else None, b_ub=rhs_ub or None,
                  A_eq=np.array(rows_eq) if rows_eq else None, b_eq=rhs_eq or None,
                  bounds=[(a, b if np.isfinite(b) else None) for a, b in zip(lb, ub)],
                  method="highs")
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}[res.status], res.fun


@pytest.mark.parametrize("seed", range(50))
def test_desk_sized_lps_match_highs(seed):
    c, A, lo, hi, lb, ub = _random_dense_lp(np.random.default_rng([99, seed]))
    res = LpEngine(c, sparse.csr_matrix(A), lo, hi).solve(lb, ub)
    status, obj = _highs(c, A, lo, hi, lb, ub)
    assert res.status == status
    if status == "optimal":
        assert res.objective == pytest.approx(obj, abs=1e-6, rel=1e-9)
        act = A @ res.x
        assert np.all(act <= hi + 1e-7) and np.all(act >= lo - 1e-7)
        assert np.all(res.x >= lb - 1e-7) and np.all(res.x <= ub + 1e-7)


def test_badly_scaled_rows_are_unscaled_on_return():
    m = MilpModel()
    x = m.add_variable("x", 0, 1e4)
    y = m.add_variable("y", 0, 1e4)
    m.add_constraint(LinExpr({x: 1e4, y: 1e-3}), ">=", 5e3)
    m.add_constraint(LinExpr({x: 1e-4, y: 1.0}), ">=", 2.0)
    m.set_objective(LinExpr({x: 100.0, y: 0.01}))
    sol = solve_lp(m)
    assert check_feasibility(m, sol.values, feas_tol=1e-7) == []
    status, obj = lp_vertex_oracle(*dense(m)[:7])
    assert sol.objective == pytest.approx(obj, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_optimal_points_are_feasible_and_no_worse_than_a_known_point(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 8)), int(rng.integers(1, 10))
    A = np.round(rng.normal(size=(m, n)), 2)
    x0 = np.round(rng.random(n) * 2, 3)
    model = MilpModel()
    for j in range(n):
        model.add_variable(f"x{j}", 0, 3)
    for i in range(m):
        e = LinExpr({j: A[i, j] for j in range(n) if A[i, j]})
        if e.terms:
            model.add_constraint(e, "<=", float(e.value(x0)) + 0.1)
    model.set_objective(LinExpr({j: float(v) for j, v in enumerate(rng.normal(size=n))}))
    sol = solve_lp(model, SolverConfig())
    assert sol.status == LpStatus.OPTIMAL
    assert check_feasibility(model, sol.values, feas_tol=1e-7) == []
    assert sol.objective <= model.objective.value(x0) + 1e-9


# -- compiled kernels agree with the numpy fallback -----------------------

needs_compiled = pytest.mark.skipif(not COMPILED, reason="compiled kernels not built")


def _eta_file(rng, m, k):
    rows = rng.integers(0, m, k).astype(np.int_)
    piv = rng.uniform(0.5, 2.0, k) * rng.choice([-1, 1], k)
    ptr, idx, val = [0], [], []
    for e in range(k):
        others = [i for i in range(m) if i != rows[e]]
        pick = rng.choice(others, size=min(len(others), 3), replace=False) if others else []
        idx.extend(pick)
        val.extend(rng.normal(size=len(pick)))
        ptr.append(len(idx))
    return (rows, piv, np.array(ptr, dtype=np.int_), np.array(idx, dtype=np.int_),
            np.array(val, dtype=float))


@needs_compiled
@pytest.mark.parametrize("seed", range(20))
def test_eta_kernels_agree(seed):
    from districtopt.solver import _kernels as fast
    rng = np.random.default_rng(seed)
    m, k = int(rng.integers(2, 30)), int(rng.integers(1, 10))
    eta = _eta_file(rng, m, k)
    z = rng.normal(size=m)
    for name in ("eta_ftran", "eta_btran"):
        a, b = z.copy(), z.copy()
        getattr(fast, name)(a, *eta, k)
        getattr(pure, name)(b, *eta, k)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("bland", [False, True])
def test_price_and_ratio_kernels_agree(seed, bland):
    from districtopt.solver import _kernels as fast
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    d = rng.normal(size=n)
    status = rng.integers(0, 4, n).astype(np.int8)
    lb = np.where(rng.random(n) < 0.2, -np.inf, 0.0)
    ub = np.where(rng.random(n) < 0.2, np.inf, rng.uniform(0, 3, n))
    ub[rng.random(n) < 0.1] = 0.0
    assert fast.price(d, status, lb, ub, 1e-9, bland) == pure.price(d, status, lb, ub, 1e-9,
                                                                     bland)
    m = int(rng.integers(1, 30))
    alpha = rng.normal(size=m) * (rng.random(m) < 0.7)
    xb = rng.uniform(-0.5, 3.5, m)
    lbb = np.where(rng.random(m) < 0.2, -np.inf, 0.0)
    ubb = np.where(rng.random(m) < 0.2, np.inf, 3.0)
    head = rng.permutation(m + n)[:m].astype(np.int_)
    for direction in (-1.0, 1.0):
        got = fast.ratio_test(alpha, direction, xb, lbb, ubb, head, 1e-9, 1e-9, bland)
        want = pure.ratio_test(alpha, direction, xb, lbb, ubb, head, 1e-9, 1e-9, bland)
        assert got[0] == want[0] and got[2] == want[2]
        assert got[1] == pytest.approx(want[1], rel=1e-12, abs=1e-15)


def test_fallback_is_selected_by_environment(monkeypatch):
    import importlib

    import districtopt.solver.kernels as kernels
    monkeypatch.setenv("DISTRICTOPT_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.COMPILED is False and mod.price is pure.price
    finally:
        monkeypatch.delenv("DISTRICTOPT_PURE_PYTHON")
        importlib.reload(kernels)


def test_pure_kernels_give_same_lp_answers(monkeypatch):
    import districtopt.solver.simplex as simplex
    answers = []
    for kern in (simplex.kernels, pure):
        monkeypatch.setattr(simplex, "kernels", kern)
        out = []
        for seed in range(10):
            c, A, lo, hi, lb, ub = _random_dense_lp(np.random.default_rng([5, seed]))
            r = LpEngine(c, sparse.csr_matrix(A), lo, hi).solve(lb, ub)
            out.append((r.status, round(r.objective, 8) if r.status == "optimal" else None))
        answers.append(out)
    assert answers[0] == answers[1]
