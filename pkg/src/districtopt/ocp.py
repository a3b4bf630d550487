"""Centralized optimal control problem: assembly, solving and schedule decoding."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .components import COST_CATEGORIES, STORAGE_CATEGORIES, ModelFragment, build
from .components import p2g as p2gm
from .milp import EQ, LinExpr, MilpModel
from .network import HorizonSpec, Network, incidence
from .solver import MilpSolution, MilpStatus, SolverConfig, solve_milp

logger = logging.getLogger(__name__)

ELASTIC_PENALTY = 1e6


class StructuralInfeasibility(ValueError):
    """The network cannot balance regardless of decisions."""


class InfeasiblePlanError(RuntimeError):
    def __init__(self, message: str, shortfalls: Sequence[tuple[str, int, float]] = ()):
        self.shortfalls = list(shortfalls)
        super().__init__(message)


class ScheduleValidationError(RuntimeError):
    """A decoded solution violates a component invariant (solver or model bug)."""


@dataclass
class DistrictState:
    """Measured state at planning time."""

    soc: dict = field(default_factory=dict)         # storage / EV id -> kWh
    p2g: dict = field(default_factory=dict)         # p2g id -> (state, steps in state or None)
    last_power: dict = field(default_factory=dict)  # id -> last applied power, for rate costs

    def copy(self) -> "DistrictState":
        return DistrictState(dict(self.soc), dict(self.p2g), dict(self.last_power))


@dataclass
class ForecastSet:
    """Profiles over the planning horizon, keyed by component id."""

    demand: dict = field(default_factory=dict)
    generation: dict = field(default_factory=dict)
    import_price: dict = field(default_factory=dict)
    export_price: dict = field(default_factory=dict)
    ev_available: dict = field(default_factory=dict)
    ev_targets: dict = field(default_factory=dict)  # id -> ((step, kWh), ...) relative to now
    ev_trips: dict = field(default_factory=dict)

    def check(self, steps: int):
        for group in ("demand", "generation", "import_price", "export_price", "ev_available"):
            for cid, prof in getattr(self, group).items():
                if len(prof) != steps:
                    raise ValueError(f"forecast {group}[{cid}] has {len(prof)} values, expected {steps}")
                if group in ("demand", "generation") and min(prof, default=0) < 0:
                    raise ValueError(f"forecast {group}[{cid}] is negative")


@dataclass
class Ocp:
    model: MilpModel
    index: dict                 # (component, quantity, step) -> var id
    net: Network
    horizon: HorizonSpec
    fragments: dict             # component id -> ModelFragment (local ids)
    offsets: dict               # component id -> variable offset in ``model``
    ports: dict                 # (component, "in"/"out", node id) -> [LinExpr per step]
    costs: dict                 # cost category -> LinExpr
    balance_rows: list          # (node id, step, LinExpr supply - demand)
    state: DistrictState
    elastic: dict = field(default_factory=dict)  # (node, step) -> (s_plus, s_minus)


def _specialize(comp, h: HorizonSpec, state: DistrictState, fc: ForecastSet, net: Network):
    """Component parameters with forecasts and measured state substituted."""
    p = comp.spec
    cid = comp.id
    rep = {}
    cat = p.category
    if cat == "consumer" and cid in fc.demand:
        rep["demand_profile"] = tuple(fc.demand[cid])
    elif cat == "res" and cid in fc.generation:
        rep["generation_profile"] = tuple(fc.generation[cid])
    elif cat == "grid_tie":
        if cid in fc.import_price:
            rep["import_price_profile"] = tuple(fc.import_price[cid])
        if cid in fc.export_price:
            rep["export_price_profile"] = tuple(fc.export_price[cid])
    elif cat == "ev":
        if cid in fc.ev_available:
            rep["available"] = tuple(fc.ev_available[cid])
        if cid in fc.ev_targets:
            rep["departure_targets"] = tuple(fc.ev_targets[cid])
        if cid in fc.ev_trips:
            rep["trips"] = tuple(fc.ev_trips[cid])
        if cid in state.soc:
            rep["e_init"] = _measured_soc(cid, p, state.soc[cid])
    elif cat in STORAGE_CATEGORIES:
        if cid in state.soc:
            rep["e_init"] = _measured_soc(cid, p, state.soc[cid])
        if p.f_fin_soc is None:
            rep["f_fin_soc"] = _default_terminal_value(comp, h, fc, net)
    elif cat == "p2g" and cid in state.p2g:
        s, k = state.p2g[cid]
        rep["initial_state"] = s
        rep["steps_in_state"] = k
    if hasattr(p, "initial_power") and cid in state.last_power:
        rep["initial_power"] = state.last_power[cid]
    return dataclasses.replace(p, **rep) if rep else p


def _measured_soc(cid, p, soc: float) -> float:
    """Measured energy, pulled into the storage bounds (a trip can overdraw an EV)."""
    v = min(max(soc, p.e_min), p.e_max)
    if abs(v - soc) > 1e-9:
        logger.warning("%s: measured state of charge %.6g outside [%g, %g], planning from %.6g",
                       cid, soc, p.e_min, p.e_max, v)
    return v


def _default_terminal_value(comp, h, fc, net) -> float:
    carrier = comp.spec.carrier
    prices = []
    for other in net.components:
        if other.category == "grid_tie" and other.spec.carrier == carrier:
            prof = fc.import_price.get(other.id, other.spec.import_price_profile)
            prices.extend(prof[: h.steps])
    if not prices:
        logger.info("%s: no %s tariff, terminal SoC value set to 0", comp.id, carrier.value)
        return 0.0
    value = float(np.mean(prices))
    logger.info("%s: terminal SoC value defaults to mean import price %.4f", comp.id, value)
    return value


def assemble(net: Network, h: HorizonSpec, state: Optional[DistrictState] = None,
             fc: Optional[ForecastSet] = None, elastic: bool = False) -> Ocp:
    """Compile all component fragments and node balances into one model.

    With ``elastic=True`` every balance row gets penalized slack in both
    directions; used to localize infeasibility.
    """
    state = state or DistrictState()
    fc = fc or ForecastSet()
    fc.check(h.steps)
    inc = incidence(net)
    for n in net.nodes:
        if inc.outputs[n.id] and not inc.inputs[n.id]:
            raise StructuralInfeasibility(
                f"node {n.id!r} has producers {inc.outputs[n.id]} but nothing can absorb power")
    model = MilpModel(name="district")
    index, fragments, offsets, ports = {}, {}, {}, {}
    costs = {c: LinExpr() for c in COST_CATEGORIES}
    carriers = {n.id: n.carrier for n in net.nodes}
    for comp in net.components:
        params = _specialize(comp, h, state, fc, net)
        frag: ModelFragment = build(params, h, comp.id)
        off = model.append(frag.model)
        fragments[comp.id] = frag
        offsets[comp.id] = off
        for (q, t), v in frag.index.items():
            index[(comp.id, q, t)] = v + off
        for direction, nodes, fports in (("in", comp.input_nodes, frag.ports_in),
                                         ("out", comp.output_nodes, frag.ports_out)):
            for nid in nodes:
                series = fports[carriers[nid]]
                ports[(comp.id, direction, nid)] = [e.shifted(off) for e in series]
        for cat, expr in frag.costs.items():
            costs[cat].iadd(expr.shifted(off))

    balance_rows = []
    slack = {}
    for n in net.nodes:
        for t in range(h.steps):
            expr = LinExpr()
            for cid in inc.outputs[n.id]:
                expr.iadd(ports[(cid, "out", n.id)][t])
            for cid in inc.inputs[n.id]:
                expr.iadd(ports[(cid, "in", n.id)][t], -1.0)
            balance_rows.append((n.id, t, expr))
            if elastic:
                sp = model.add_variable(f"{n.id}.shortfall.t{t}")
                sm = model.add_variable(f"{n.id}.surplus.t{t}")
                slack[(n.id, t)] = (sp, sm)
                expr = expr + LinExpr({sp: 1.0, sm: -1.0})
            e = expr.normalized()
            if not e.terms:
                if abs(e.const) > 1e-9:
                    raise StructuralInfeasibility(
                        f"node {n.id!r} step {t}: fixed imbalance of {e.const:g} kW")
                continue
            model.add_constraint(e, EQ, 0.0, f"balance.{n.id}.t{t}")
    objective = LinExpr()
    for cat in COST_CATEGORIES:
        objective.iadd(costs[cat])
    if elastic:
        for sp, sm in slack.values():
            objective.iadd(LinExpr({sp: ELASTIC_PENALTY, sm: ELASTIC_PENALTY}))
    model.set_objective(objective)
    return Ocp(model, index, net, h, fragments, offsets, ports, costs, balance_rows, state, slack)


@dataclass
class Schedule:
    horizon: HorizonSpec
    setpoints: dict            # component -> quantity -> np.ndarray over steps
    modes: dict                # component -> [label per step]
    breakdown: dict            # cost category -> value
    objective: float
    max_residual: float
    solver: dict = field(default_factory=dict)

    def rows(self):
        """Flat ``(component, quantity, step, value)`` records in a stable order."""
        out = []
        for cid in sorted(self.setpoints):
            for q in sorted(self.setpoints[cid]):
                for t, v in enumerate(self.setpoints[cid][q]):
                    out.append((cid, q, t, float(v)))
            if cid in self.modes:
                for t, m in enumerate(self.modes[cid]):
                    out.append((cid, "mode", t, m))
        return out

    def value(self, cid: str, quantity: str, step: int = 0) -> float:
        return float(self.setpoints[cid][quantity][step])


def extract_schedule(solution: MilpSolution, ocp: Ocp, config: Optional[SolverConfig] = None) -> Schedule:
    """Decode and validate an incumbent into per-component setpoints."""
    if not solution.has_incumbent:
        raise ValueError(f"solution has no incumbent (status {solution.status.value})")
    # snap bound round-off (e.g. -1e-16 kW) so decoded powers respect their limits exactly
    lb = np.array([v.lb for v in ocp.model.variables])
    ub = np.array([v.ub for v in ocp.model.variables])
    x = np.clip(solution.values, lb, ub)
    H = ocp.horizon.steps
    setpoints: dict = {}
    for (cid, q, t), v in ocp.index.items():
        # steps without a decision (e.g. nothing to curtail) read as zero
        setpoints.setdefault(cid, {}).setdefault(q, np.zeros(H + 1 if q == "E" else H))
        setpoints[cid][q][t] = x[v]
    for (cid, direction, nid), series in ocp.ports.items():
        setpoints.setdefault(cid, {})[f"{direction}:{nid}"] = np.array([e.value(x) for e in series])
    modes: dict = {}
    for comp in ocp.net.components:
        cid = comp.id
        sp = setpoints.get(cid, {})
        cat = comp.category
        if cat in STORAGE_CATEGORIES or cat == "ev":
            if "E" in sp:
                sp["E"][0] = ocp.state.soc.get(cid, comp.spec.e_init)
            nid = comp.input_nodes[0]
            pc = sp[f"in:{nid}"]
            pd = sp[f"out:{nid}"]
            # the inactive direction may carry solver noise up to the integrality tolerance
            tol = 1e-6 * max(comp.spec.p_char_max, comp.spec.p_disc_max, 1.0) + 1e-7
            both = (pc != 0) & (pd != 0)
            bad = np.flatnonzero(both & (np.minimum(np.abs(pc), np.abs(pd)) > tol))
            if bad.size:
                raise ScheduleValidationError(
                    f"{cid}: simultaneous charge and discharge at steps {bad.tolist()}")
            drop_c = both & (np.abs(pc) <= np.abs(pd))
            drop_d = both & ~drop_c
            for key, mask in (("P_char", drop_c), ("P_disc", drop_d)):
                port = pc if key == "P_char" else pd
                port[mask] = 0.0
                if key in sp:
                    sp[key][mask] = 0.0
            modes[cid] = ["charge" if c > 1e-9 else "discharge" if d > 1e-9 else "idle"
                          for c, d in zip(pc, pd)]
        elif cat == "p2g":
            states = p2gm.decode_states(sp["delta_off"], sp["delta_hot"], sp["delta_on"])
            p = comp.spec
            s0, k0 = ocp.state.p2g.get(cid, (p.initial_state, p.steps_in_state))
            t_oh, t_ho = p.lag_steps(ocp.horizon.dt_hours)
            if not p2gm.accepts(states, s0, k0, t_oh, t_ho):
                raise ScheduleValidationError(f"{cid}: state sequence {states} violates the P2G automaton")
            modes[cid] = states
            nid_in = comp.input_nodes[0]
            nid_out = comp.output_nodes[0]
            sp["P_in"] = sp[f"in:{nid_in}"]
            sp["P_out"] = sp[f"out:{nid_out}"]
    breakdown = {cat: float(expr.value(x)) for cat, expr in ocp.costs.items()}
    total = sum(breakdown.values())
    if abs(total - solution.objective) > 1e-6 * max(1.0, abs(solution.objective)):
        raise ScheduleValidationError(
            f"objective breakdown {total} differs from objective {solution.objective}")
    resid = max((abs(e.value(x)) for _, _, e in ocp.balance_rows), default=0.0)
    if not ocp.elastic and resid > 1e-6:
        raise ScheduleValidationError(f"node balance residual {resid:.3e} kW")
    info = {"status": solution.status.value, "objective": solution.objective,
            "bound": solution.bound, "gap": solution.gap, "nodes": solution.node_count,
            "lp_iterations": solution.lp_iterations, "wall_time_s": solution.wall_time_s}
    if config is not None:
        info.update({f"config.{k}": v for k, v in dataclasses.asdict(config).items()})
    return Schedule(ocp.horizon, setpoints, modes, breakdown, solution.objective, resid, info)


def diagnose_infeasibility(net: Network, h: HorizonSpec, state: DistrictState, fc: ForecastSet,
                           config: SolverConfig):
    """Solve with penalized balance slack; return ``(node, step, kW)`` shortfalls/surpluses."""
    ocp = assemble(net, h, state, fc, elastic=True)
    sol = solve_milp(ocp.model, config)
    if not sol.has_incumbent:
        return []
    out = []
    for (nid, t), (sp, sm) in sorted(ocp.elastic.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        v = sol.values[sp] - sol.values[sm]
        if abs(v) > 1e-6:
            out.append((nid, t, float(v)))
    return out


def plan(net: Network, h: HorizonSpec, state: Optional[DistrictState] = None,
         fc: Optional[ForecastSet] = None, config: Optional[SolverConfig] = None,
         hint: Optional[Mapping] = None):
    """Assemble, solve and decode; returns ``(schedule, solution, ocp)``.

    Raises :class:`InfeasiblePlanError` naming the short/long node-steps when
    the problem has no feasible plan.
    """
    config = config or SolverConfig()
    ocp = assemble(net, h, state, fc)
    sol = solve_milp(ocp.model, config, hint)
    if sol.status == MilpStatus.INFEASIBLE:
        short = diagnose_infeasibility(net, h, ocp.state, fc or ForecastSet(), config)
        where = ", ".join(f"{n}@t{t}: {v:+.3f} kW" for n, t, v in short[:10])
        raise InfeasiblePlanError(f"no feasible plan; balance relief needed at {where or 'unknown'}",
                                  short)
    if not sol.has_incumbent:
        return None, sol, ocp
    return extract_schedule(sol, ocp, config), sol, ocp


def shifted_hint(prev: Schedule | None, prev_index: Mapping, prev_values, ocp: Ocp, shift: int = 1):
    """Map a previous solution onto ``ocp``'s variables, moved ``shift`` steps earlier."""
    if prev_values is None:
        return None
    hint = {}
    for (cid, q, t), v in ocp.index.items():
        old = prev_index.get((cid, q, t + shift))
        if old is not None:
            hint[v] = float(prev_values[old])
    return hint
