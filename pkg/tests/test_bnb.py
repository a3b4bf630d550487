import dataclasses
import itertools
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from districtopt.components import STORAGE_CATEGORIES
from districtopt.milp import LinExpr, MilpModel, check_feasibility
from districtopt.network import HorizonSpec, Network
from districtopt.ocp import DistrictState, assemble, extract_schedule, shifted_hint
from districtopt.sim import (ForecastPolicy, ScenarioData, command_from_schedule, make_forecast,
                             step_plant)
from districtopt.solver import (MilpStatus, SolverConfig, relative_gap, solve_lp, solve_milp,
                                warm_start)
from districts import p2g_district, storage_district
from oracles import milp_brute_force, model_digest, random_milp

ORACLE = os.path.join(os.path.dirname(__file__), "data", "milp_oracle.json")
EXACT = SolverConfig(rel_gap=1e-9)


def _frozen():
    with open(ORACLE) as fh:
        return json.load(fh)


def _close(a, b):
    return abs(a - b) <= 1e-6 or abs(a - b) <= 1e-8 * max(abs(a), abs(b))


def _knapsack():
    m = MilpModel("knapsack")
    a, b, c = (m.add_variable(n, 0, 1, binary=True) for n in "abc")
    m.add_constraint(LinExpr({a: 2, b: 1, c: 1}), "<=", 2)
    m.set_objective(LinExpr({a: -3.0, b: -2.0, c: -2.0}))
    return m


def test_knapsack():
    sol = solve_milp(_knapsack())
    assert sol.status == MilpStatus.OPTIMAL
    assert -sol.objective == pytest.approx(4.0)
    # enumerate all 8 assignments; b = c = 1 ties with a = 1 plus one of b, c
    best = [p for p in itertools.product((0, 1), repeat=3)
            if 2 * p[0] + p[1] + p[2] <= 2 and 3 * p[0] + 2 * p[1] + 2 * p[2] == 4]
    assert tuple(np.round(sol.values).astype(int)) in best


def test_pure_lp_matches_solve_lp():
    m = MilpModel()
    x = m.add_variable("x", 0, 4)
    y = m.add_variable("y", 0, 4)
    m.add_constraint(LinExpr({x: 1, y: 2}), "<=", 5)
    m.add_constraint(LinExpr({x: 3, y: 1}), "<=", 6)
    m.set_objective(LinExpr({x: -1.0, y: -1.0}))
    lp, milp = solve_lp(m), solve_milp(m)
    assert milp.status == MilpStatus.OPTIMAL and milp.node_count == 1
    assert milp.objective == lp.objective
    np.testing.assert_array_equal(milp.values, lp.values)


def test_infeasible_after_branching():
    m = MilpModel()
    a = m.add_variable("a", 0, 1, binary=True)
    b = m.add_variable("b", 0, 1, binary=True)
    m.add_constraint(LinExpr({a: 1, b: 1}), "==", 1)
    m.add_constraint(LinExpr({a: 1, b: -1}), "==", 0)
    sol = solve_milp(m)
    assert sol.status == MilpStatus.INFEASIBLE and not sol.has_incumbent
    assert sol.objective == math.inf


def test_infeasible_relaxation():
    m = MilpModel()
    a = m.add_variable("a", 0, 1, binary=True)
    m.add_constraint(LinExpr.var(a), ">=", 2)
    assert solve_milp(m).status == MilpStatus.INFEASIBLE


def test_unbounded():
    m = MilpModel()
    x = m.add_variable("x", 0, math.inf)
    m.add_variable("b", 0, 1, binary=True)
    m.set_objective(LinExpr.var(x, -1.0))
    assert solve_milp(m).status == MilpStatus.UNBOUNDED


def test_frozen_oracle_matches_generators():
    records = _frozen()
    assert len(records) == 200
    for rec in records[:20]:
        model = random_milp(rec["seed"])
        assert model_digest(model) == rec["digest"], f"generator drift at seed {rec['seed']}"
        assert len(model.binaries()) == rec["binaries"] <= 12


@pytest.mark.parametrize("seed", range(0, 200, 5))
def test_random_milps_match_frozen_oracle(seed):
    rec = _frozen()[seed]
    model = random_milp(seed)
    sol = solve_milp(model, EXACT)
    assert sol.status.value == rec["status"]
    assert _close(sol.objective, rec["objective"])
    assert check_feasibility(model, sol.values) == []


@pytest.mark.slow
@pytest.mark.parametrize("seed", [3, 49, 117, 188])
def test_brute_force_recomputed_live(seed):
    model = random_milp(seed)
    status, obj, _ = milp_brute_force(model)
    assert status == _frozen()[seed]["status"]
    assert _close(obj, _frozen()[seed]["objective"])


@pytest.mark.parametrize("seed", range(12))
def test_storage_districts_match_enumeration(seed):
    net, h = storage_district(seed, steps=2)
    model = assemble(net, h).model
    assert len(model.binaries()) <= 12
    status, obj, _ = milp_brute_force(model)
    sol = solve_milp(model, EXACT)
    assert sol.status.value == status
    assert _close(sol.objective, obj)


@pytest.mark.parametrize("seed", range(8))
def test_p2g_districts_match_enumeration(seed):
    net, _ = p2g_district(seed, steps=1)
    comps = tuple(dataclasses.replace(c, spec=dataclasses.replace(
        c.spec, t_off_hot=1.0, t_hot_off=1.0, steps_in_state=None))
        if c.category == "p2g" else c for c in net.components)
    model = assemble(Network(net.nodes, comps), HorizonSpec(1, 1.0)).model
    assert len(model.binaries()) <= 12
    status, obj, _ = milp_brute_force(model)
    sol = solve_milp(model, EXACT)
    assert sol.status.value == status
    assert _close(sol.objective, obj)


@pytest.mark.parametrize("seed", [0, 7, 42])
def test_deterministic(seed):
    model = random_milp(seed)
    a, b = solve_milp(model), solve_milp(model)
    assert a.node_count == b.node_count and a.objective == b.objective
    np.testing.assert_array_equal(a.values, b.values)
    assert a.bound_trace == b.bound_trace


@pytest.mark.parametrize("seed", range(0, 200, 10))
def test_bound_monotone_and_sandwich(seed):
    rec = _frozen()[seed]
    sol = solve_milp(random_milp(seed))
    trace = sol.bound_trace
    assert all(b2 >= b1 - 1e-9 * max(1.0, abs(b1)) for b1, b2 in zip(trace, trace[1:]))
    # best-known feasible point from enumeration bounds the incumbent from above
    assert sol.bound <= rec["objective"] + 1e-6
    assert sol.objective >= sol.bound
    assert sol.objective <= rec["objective"] + 1e-4 * max(1.0, abs(rec["objective"])) + 1e-9
    assert sol.gap == pytest.approx(relative_gap(sol.objective, sol.bound))


def test_node_limit_returns_honest_gap():
    model = random_milp(61)
    full = solve_milp(model, EXACT)
    capped = solve_milp(model, SolverConfig(rel_gap=1e-9, node_limit=1))
    assert capped.status in (MilpStatus.NODE_LIMIT, MilpStatus.OPTIMAL)
    if capped.status == MilpStatus.NODE_LIMIT:
        assert capped.node_count == 1
        assert capped.bound <= full.objective + 1e-9
        if capped.has_incumbent:
            assert capped.objective >= full.objective - 1e-9
            assert capped.gap == pytest.approx(relative_gap(capped.objective, capped.bound))
        else:
            assert capped.gap == math.inf


def test_node_limit_is_reached_on_a_hard_instance():
    hard = next(s for s in range(200) if solve_milp(random_milp(s), EXACT).node_count > 3)
    capped = solve_milp(random_milp(hard), SolverConfig(rel_gap=1e-9, node_limit=2))
    assert capped.status == MilpStatus.NODE_LIMIT
    assert capped.node_count == 2


def test_time_limit():
    hard = next(s for s in range(200) if solve_milp(random_milp(s), EXACT).node_count > 3)
    capped = solve_milp(random_milp(hard), SolverConfig(rel_gap=1e-9, time_limit_s=0.0))
    assert capped.status == MilpStatus.TIME_LIMIT
    if capped.has_incumbent:
        assert check_feasibility(random_milp(hard), capped.values) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_incumbents_pass_standalone_check(seed):
    model = random_milp(seed)
    sol = solve_milp(model)
    assert sol.status == MilpStatus.OPTIMAL
    assert check_feasibility(model, sol.values, feas_tol=1e-7, int_tol=1e-6) == []
    assert sol.objective == pytest.approx(model.objective.value(sol.values), abs=1e-7)


# -- warm start --------------------------------------------------------------

def _initial_state(net):
    state = DistrictState()
    for c in net.components:
        if c.category in STORAGE_CATEGORIES or c.category == "ev":
            state.soc[c.id] = c.spec.e_init
        elif c.category == "p2g":
            state.p2g[c.id] = (c.spec.initial_state, c.spec.steps_in_state)
    return state


def _receding_pair(net, h):
    """Plan at step 0, apply it, and assemble the step-1 problem plus the shifted hint."""
    data = ScenarioData.from_network(net, h.dt_hours)
    policy = ForecastPolicy()
    state = _initial_state(net)
    first = assemble(net, h, state, make_forecast(policy, data, 0, h, net))
    sol = solve_milp(first.model)
    schedule = extract_schedule(sol, first)
    state, _ = step_plant(net, state, command_from_schedule(schedule, net, 0), data, 0)
    second = assemble(net, h, state, make_forecast(policy, data, 1, h, net))
    return second, shifted_hint(None, first.index, sol.values, second, 1)


def test_warm_start_never_needs_more_nodes_on_the_regression_suite():
    suite = [(maker, seed) for maker in (p2g_district, storage_district) for seed in range(10)]
    better = 0
    for maker, seed in suite:
        ocp, hint = _receding_pair(*maker(seed, steps=12, span=13))
        cold = solve_milp(ocp.model)
        warm = warm_start(ocp.model, hint)
        assert warm.status == cold.status == MilpStatus.OPTIMAL
        assert warm.objective == pytest.approx(cold.objective, abs=1e-4 * max(1, abs(cold.objective)))
        better += warm.node_count <= cold.node_count
    assert better >= 0.9 * len(suite)


def test_infeasible_hint_is_ignored():
    model = _knapsack()
    cold = solve_milp(model)
    warm = warm_start(model, {0: 1.0, 1: 1.0, 2: 1.0})
    assert warm.objective == cold.objective and warm.status == cold.status
    np.testing.assert_array_equal(warm.values, cold.values)


def test_partial_and_out_of_range_hints():
    model = _knapsack()
    assert warm_start(model, {0: 0.9}).objective == pytest.approx(-4.0)
    assert warm_start(model, np.array([np.nan, 1.0, np.nan])).objective == pytest.approx(-4.0)


def test_exact_optimal_hint_closes_at_root():
    model = random_milp(11)
    cold = solve_milp(model, EXACT)
    warm = warm_start(model, cold.values, EXACT)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
    assert warm.node_count <= max(1, cold.node_count)
