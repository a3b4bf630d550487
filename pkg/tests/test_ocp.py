import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from districtopt.casestudy import HOURLY, district, synthetic_profiles
from districtopt.components import (COST_CATEGORIES, BatteryParams, ConsumerParams,
                                    GeneratorParams, GridTieParams, P2gParams, ResParams)
from districtopt.milp import LinExpr
from districtopt.network import Carrier, ComponentRef, HorizonSpec, Network, Node
from districtopt.ocp import (DistrictState, ForecastSet, InfeasiblePlanError,
                             ScheduleValidationError, StructuralInfeasibility, assemble,
                             extract_schedule, plan, shifted_hint)
from districtopt.solver import MilpSolution, MilpStatus, SolverConfig, solve_milp
from districts import p2g_district, storage_district
from invariants import plan_violations

E, H, G = Carrier.ELECTRICITY, Carrier.HEAT, Carrier.GAS
EXACT = SolverConfig(rel_gap=1e-9)


def _bus(pv=3.0, load=2.0, buy=0.2, sell=0.05, **grid):
    return Network((Node("bus", E),),
                   (ComponentRef("pv", ResParams([pv], curtailable=False), (), ("bus",)),
                    ComponentRef("load", ConsumerParams([load]), ("bus",), ()),
                    ComponentRef("grid", GridTieParams([buy], [sell], **grid), ("bus",),
                                 ("bus",))))


def test_single_node_balance_forces_export():
    schedule, sol, ocp = plan(_bus(), HorizonSpec(1, 1.0))
    port = ocp.ports[("grid", "out", "bus")][0] - ocp.ports[("grid", "in", "bus")][0]
    assert port.value(sol.values) == pytest.approx(-1.0)
    assert schedule.objective == pytest.approx(-0.05)


def test_case_study_census():
    prof = synthetic_profiles(24, 24)
    ocp = assemble(district(prof), HOURLY)
    H = 24
    n_pv = int((prof.pv[:H] > 0).sum())
    n_wind = int((prof.wind[:H] > 0).sum())
    # per step: 2 load shed fractions, 3 ties x 2, boiler P_out+u, biomass P_out,
    # tank P_char+P_disc+delta+E, P2G 3 states + 4 transitions + P_on
    per_step = 2 + 6 + 2 + 1 + 4 + 8
    assert ocp.model.num_vars == per_step * H + n_pv + n_wind
    # balance 3 + boiler 2 + tank 3 + P2G (one_state 1, AND rows 4+4+3+3 with both dwell
    # lags at 2 steps, one_transition 1, adjacency 2, state flow 3, two dwell windows,
    # power window 2) = 33 per step
    assert ocp.model.num_constraints == 33 * H
    assert len(ocp.model.binaries()) == (1 + 1 + 7) * H
    if n_pv == 12 and n_wind == 24:
        assert (ocp.model.num_vars, ocp.model.num_constraints) == (588, 792)


def test_empty_network_gives_empty_model():
    ocp = assemble(Network(), HorizonSpec(3, 1.0))
    assert ocp.model.num_vars == 0 and ocp.model.num_constraints == 0
    sol = solve_milp(ocp.model)
    assert sol.status == MilpStatus.OPTIMAL and sol.objective == 0.0


def test_structural_infeasibility_is_reported_before_solving():
    net = Network((Node("a", E), Node("b", E)),
                  (ComponentRef("pv", ResParams([1.0]), (), ("a",)),
                   ComponentRef("load", ConsumerParams([1.0]), ("b",), ()),
                   ComponentRef("grid", GridTieParams([0.2]), ("b",), ("b",))))
    with pytest.raises(StructuralInfeasibility, match="'a'"):
        assemble(net, HorizonSpec(1, 1.0))


def test_fixed_imbalance_is_structural():
    net = Network((Node("bus", E),),
                  (ComponentRef("pv", ResParams([1.0], curtailable=False), (), ("bus",)),
                   ComponentRef("load", ConsumerParams([2.0]), ("bus",), ())))
    with pytest.raises(StructuralInfeasibility, match="fixed imbalance"):
        assemble(net, HorizonSpec(1, 1.0))


def test_infeasible_plan_names_the_short_node_and_step():
    net = Network((Node("bus", E),),
                  (ComponentRef("load", ConsumerParams([1.0, 5.0]), ("bus",), ()),
                   ComponentRef("grid", GridTieParams([0.2, 0.2], [0.0, 0.0], p_import_max=3.0),
                                ("bus",), ("bus",))))
    with pytest.raises(InfeasiblePlanError) as err:
        plan(net, HorizonSpec(2, 1.0))
    assert err.value.shortfalls == [("bus", 1, pytest.approx(2.0))]
    assert "bus@t1" in str(err.value)


def test_forecast_lengths_are_checked():
    fc = ForecastSet(demand={"load": [1.0, 2.0]})
    with pytest.raises(ValueError, match="expected 3"):
        assemble(_bus(), HorizonSpec(3, 1.0), fc=fc)
    with pytest.raises(ValueError, match="negative"):
        assemble(_bus(), HorizonSpec(1, 1.0), fc=ForecastSet(demand={"load": [-1.0]}))


def test_forecasts_and_state_override_nominal_values():
    net, h = storage_district(0, steps=4)
    fc = ForecastSet(demand={"load": [0.0] * 4})
    ocp = assemble(net, h, DistrictState(soc={"bat": 7.0}), fc)
    assert ocp.fragments["load"].model.num_vars == 0
    soc_row = next(c for c in ocp.model.constraints if c.name == "bat.soc.t0")
    assert soc_row.rhs == pytest.approx(7.0)


def test_battery_step_is_labeled_charge():
    net = Network((Node("bus", E),),
                  (ComponentRef("load", ConsumerParams([1.0, 1.0]), ("bus",), ()),
                   ComponentRef("grid", GridTieParams([0.1, 0.5], [0.0, 0.0]), ("bus",), ("bus",)),
                   ComponentRef("bat", BatteryParams(2, 2, 0.95, 5, e_init=0.0, f_fin_soc=0.0),
                                ("bus",), ("bus",))))
    schedule, _, _ = plan(net, HorizonSpec(2, 1.0), config=EXACT)
    assert schedule.modes["bat"] == ["charge", "discharge"]
    assert schedule.value("bat", "P_char", 0) > 0


def test_p2g_gas_setpoint():
    net = Network((Node("elec", E), Node("gas", G)),
                  (ComponentRef("grid", GridTieParams([0.2] * 3, [0.0] * 3), ("elec",), ("elec",)),
                   ComponentRef("gas_grid", GridTieParams([0.1] * 3, [0.05] * 3, carrier=G),
                                ("gas",), ("gas",)),
                   ComponentRef("p2g", P2gParams(0.75, 5.0, 10.0, 0.5, 2.0, 2.0), ("elec",),
                                ("gas",))))
    h = HorizonSpec(3, 1.0)
    ocp = assemble(net, h, DistrictState(p2g={"p2g": ("on", None)}))
    ocp.model.add_constraint(LinExpr.var(ocp.index[("p2g", "delta_on", 0)]), "==", 1.0)
    ocp.model.add_constraint(LinExpr.var(ocp.index[("p2g", "P_on", 0)]), "==", 8.0)
    schedule = extract_schedule(solve_milp(ocp.model, EXACT), ocp)
    assert schedule.modes["p2g"][0] == "on"
    assert schedule.value("p2g", "P_out", 0) == pytest.approx(6.0)
    assert schedule.value("p2g", "P_in", 0) == pytest.approx(8.0)


@pytest.mark.parametrize("seed", range(6))
def test_breakdown_partitions_the_objective(seed):
    net, h = storage_district(seed, steps=8)
    schedule, sol, _ = plan(net, h)
    assert set(schedule.breakdown) == set(COST_CATEGORIES)
    assert sum(schedule.breakdown.values()) == pytest.approx(sol.objective, abs=1e-6)


@pytest.mark.parametrize("maker,seed", [(m, s) for m in (p2g_district, storage_district)
                                        for s in range(8)])
def test_plans_satisfy_invariants(maker, seed):
    net, h = maker(seed, steps=10)
    schedule, _, ocp = plan(net, h)
    assert plan_violations(schedule, ocp) == []
    assert schedule.max_residual <= 1e-6


def test_extraction_refuses_a_corrupted_incumbent():
    net, h = storage_district(1, steps=4)
    ocp = assemble(net, h)
    sol = solve_milp(ocp.model)
    bad = dataclasses.replace(sol, values=sol.values.copy())
    bad.values[ocp.index[("bat", "P_char", 0)]] = 2.0
    bad.values[ocp.index[("bat", "P_disc", 0)]] = 2.0
    with pytest.raises(ScheduleValidationError):
        extract_schedule(bad, ocp)


def test_extraction_requires_an_incumbent():
    net, h = storage_district(1, steps=2)
    ocp = assemble(net, h)
    empty = MilpSolution(MilpStatus.TIME_LIMIT, None, float("inf"), 0.0, float("inf"), 5)
    with pytest.raises(ValueError, match="no incumbent"):
        extract_schedule(empty, ocp)


def _scaled(net, k):
    """Every monetary parameter multiplied by ``k``."""
    comps = []
    for c in net.components:
        p = c.spec
        if isinstance(p, GridTieParams):
            p = dataclasses.replace(p, import_price_profile=tuple(k * v for v in p.import_price_profile),
                                    export_price_profile=tuple(k * v for v in p.export_price_profile))
        elif isinstance(p, GeneratorParams):
            p = dataclasses.replace(p, fuel_cost=k * p.fuel_cost)
        elif isinstance(p, ConsumerParams):
            p = dataclasses.replace(p, shed_cost=k * p.shed_cost)
        elif isinstance(p, ResParams):
            p = dataclasses.replace(p, curtail_cost=k * p.curtail_cost)
        elif isinstance(p, BatteryParams):
            p = dataclasses.replace(p, f_use=k * p.f_use,
                                    f_fin_soc=None if p.f_fin_soc is None else k * p.f_fin_soc)
        comps.append(dataclasses.replace(c, spec=p))
    return Network(net.nodes, tuple(comps))


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("k", [0.5, 3.0])
def test_price_scaling_scales_objective_and_keeps_schedule_optimal(seed, k):
    net, h = storage_district(seed, steps=6)
    base = assemble(net, h)
    big = assemble(_scaled(net, k), h)
    sol, sol_k = solve_milp(base.model, EXACT), solve_milp(big.model, EXACT)
    assert sol_k.objective == pytest.approx(k * sol.objective, abs=1e-6, rel=1e-7)
    # the scaled problem's argmin is optimal (up to ties) for the original prices
    assert base.model.objective.value(sol_k.values) == pytest.approx(sol.objective, abs=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 50), st.floats(0.0, 0.3))
def test_objective_is_monotone_in_import_price(seed, delta):
    net, h = storage_district(seed, steps=6)
    # an explicit terminal value: the default one follows the import price
    net = Network(net.nodes, tuple(
        dataclasses.replace(c, spec=dataclasses.replace(c.spec, f_fin_soc=0.2))
        if c.id == "bat" else c for c in net.components))
    raised = []
    for c in net.components:
        if c.id == "grid":
            c = dataclasses.replace(c, spec=dataclasses.replace(
                c.spec, import_price_profile=tuple(v + delta for v in c.spec.import_price_profile)))
        raised.append(c)
    a = solve_milp(assemble(net, h).model, EXACT).objective
    b = solve_milp(assemble(Network(net.nodes, tuple(raised)), h).model, EXACT).objective
    assert b >= a - 1e-7


def test_terminal_value_defaults_to_mean_import_price(caplog):
    prices = [0.1, 0.3, 0.2]
    bat = BatteryParams(2, 2, 0.9, 5, e_init=1.0)
    net = Network((Node("bus", E),),
                  (ComponentRef("load", ConsumerParams([1.0] * 3), ("bus",), ()),
                   ComponentRef("grid", GridTieParams(prices, [0.0] * 3), ("bus",), ("bus",)),
                   ComponentRef("bat", bat, ("bus",), ("bus",))))
    with caplog.at_level(logging.INFO):
        ocp = assemble(net, HorizonSpec(3, 1.0))
    e_final = ocp.index[("bat", "E", 3)]
    assert ocp.model.objective.terms[e_final] == pytest.approx(-0.2)
    assert "terminal SoC value defaults" in caplog.text


def test_shifted_hint_moves_one_step_earlier():
    net, h = storage_district(2, steps=5, span=6)
    first = assemble(net, h)
    values = np.arange(first.model.num_vars, dtype=float)
    second = assemble(net, h)
    hint = shifted_hint(None, first.index, values, second, 1)
    for (cid, q, t), v in second.index.items():
        old = first.index.get((cid, q, t + 1))
        if old is None:
            assert v not in hint
        else:
            assert hint[v] == values[old]
    assert shifted_hint(None, first.index, None, second) is None


def test_solver_config_is_recorded():
    schedule, _, _ = plan(_bus(), HorizonSpec(1, 1.0), config=SolverConfig(seed=7))
    assert schedule.solver["config.seed"] == 7
    assert schedule.solver["status"] == "optimal"
