"""Closed-loop receding-horizon simulation and KPIs."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .components import STORAGE_CATEGORIES
from .components import p2g as p2gm
from .network import Carrier, HorizonSpec, Network
from .ocp import DistrictState, ForecastSet, Schedule, assemble, extract_schedule, shifted_hint
from .solver import MilpStatus, SolverConfig, solve_milp

logger = logging.getLogger(__name__)

PERFECT, PERSISTENCE, NOISY = "perfect", "persistence", "noisy"


@dataclass(frozen=True)
class ForecastPolicy:
    kind: str = PERFECT
    sigma: float = 0.0      # relative standard deviation of the noisy forecast
    seed: int = 0
    lookback: int = 24      # persistence window, in steps

    def __post_init__(self):
        if self.kind not in (PERFECT, PERSISTENCE, NOISY):
            raise ValueError(f"unknown forecast policy {self.kind!r}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.lookback < 1:
            raise ValueError("lookback must be at least one step")


@dataclass
class ScenarioData:
    """True time series over the simulation span, keyed by component id."""

    dt_hours: float
    demand: dict = field(default_factory=dict)
    generation: dict = field(default_factory=dict)
    import_price: dict = field(default_factory=dict)
    export_price: dict = field(default_factory=dict)
    ev_available: dict = field(default_factory=dict)
    initial_state: DistrictState = field(default_factory=DistrictState)

    @classmethod
    def from_network(cls, net: Network, dt_hours: float) -> "ScenarioData":
        """Take the truth from the profiles stored in the component parameters."""
        d = cls(dt_hours)
        for comp in net.components:
            p = comp.spec
            if comp.category == "consumer":
                d.demand[comp.id] = np.asarray(p.demand_profile, float)
            elif comp.category == "res":
                d.generation[comp.id] = np.asarray(p.generation_profile, float)
            elif comp.category == "grid_tie":
                d.import_price[comp.id] = np.asarray(p.import_price_profile, float)
                d.export_price[comp.id] = np.asarray(p.export_price_profile, float)
            elif comp.category == "ev":
                d.ev_available[comp.id] = np.asarray(p.available, bool)
        return d

    @property
    def span(self) -> int:
        lengths = [len(v) for g in (self.demand, self.generation, self.import_price,
                                    self.export_price, self.ev_available) for v in g.values()]
        return min(lengths) if lengths else 0


def _tile(window: np.ndarray, steps: int) -> np.ndarray:
    return np.resize(window, steps)


def make_forecast(policy: ForecastPolicy, data: ScenarioData, now: int, h: HorizonSpec,
                  net: Optional[Network] = None) -> ForecastSet:
    """Forecast of demand and generation over ``[now, now + H)``.

    Prices and EV availability are taken as known. Persistence uses the
    last ``lookback`` true values (the first window before enough history
    exists); noise is mean-one lognormal, seeded from ``(seed, now)``.
    """
    H = h.steps
    if now + H > data.span:
        raise ValueError(f"scenario span {data.span} too short for step {now} with horizon {H}")
    sl = slice(now, now + H)
    fc = ForecastSet(
        import_price={k: v[sl].copy() for k, v in data.import_price.items()},
        export_price={k: v[sl].copy() for k, v in data.export_price.items()},
        ev_available={k: v[sl].copy() for k, v in data.ev_available.items()},
    )
    rng = None
    if policy.kind == NOISY:
        rng = np.random.default_rng([policy.seed, now])
        s = math.sqrt(math.log1p(policy.sigma ** 2))
    for group in ("demand", "generation"):
        out = {}
        for cid in sorted(getattr(data, group)):
            series = getattr(data, group)[cid]
            if policy.kind == PERSISTENCE:
                L = policy.lookback
                start = max(now - L, 0)
                window = series[start:start + L]
                f = _tile(window, H)
            else:
                f = series[sl].copy()
                if rng is not None:
                    z = rng.standard_normal(H)
                    if s > 0:
                        f = f * np.exp(s * z - 0.5 * s * s)
            out[cid] = f
        setattr(fc, group, out)
    if net is not None:
        for comp in net.components:
            if comp.category == "ev":
                p = comp.spec
                fc.ev_targets[comp.id] = tuple((k - now, kwh) for k, kwh in p.departure_targets
                                               if now < k <= now + H)
                fc.ev_trips[comp.id] = tuple((k - now, kwh) for k, kwh in p.trips
                                             if now <= k < now + H)
    return fc


# -- plant -----------------------------------------------------------------

@dataclass
class StepRecord:
    """Realized operation of one step (generator convention on ``flows``)."""

    step: int
    flows: dict                # (component, node) -> kW injected (negative = drawn)
    costs: dict                # (category, carrier) -> currency
    quantities: dict           # (component, quantity) -> value
    events: list = field(default_factory=list)


def command_from_schedule(schedule: Schedule, net: Network, k: int = 0) -> dict:
    """Setpoints of step ``k`` of a plan, per component."""
    cmd = {}
    sp = schedule.setpoints
    for comp in net.components:
        cid, cat = comp.id, comp.category
        v = sp.get(cid, {})

        def at(q, default=0.0):
            return float(v[q][k]) if q in v else default
        if cat in STORAGE_CATEGORIES or cat == "ev":
            nid = comp.input_nodes[0]
            cmd[cid] = {"P_char": at(f"in:{nid}"), "P_disc": at(f"out:{nid}")}
        elif cat == "p2g":
            cmd[cid] = {"mode": schedule.modes[cid][k], "P_on": at("P_on")}
        elif cat in ("converter", "generator"):
            cmd[cid] = {"P_out": at("P_out")}
        elif cat == "cogen":
            cmd[cid] = {"P_in": at("P_in")}
        elif cat == "res":
            cmd[cid] = {"curtail": at("curtail")}
        elif cat == "consumer":
            cmd[cid] = {"shed": at("shed")}
        elif cat == "grid_tie":
            cmd[cid] = {"P_imp": at("P_imp"), "P_exp": at("P_exp")}
    return cmd


def idle_command(net: Network, state: DistrictState) -> dict:
    """Everything off or idle; P2G holds HOT/OFF (ON drops to HOT when allowed)."""
    cmd = {}
    for comp in net.components:
        cat = comp.category
        if cat in STORAGE_CATEGORIES or cat == "ev":
            cmd[comp.id] = {"P_char": 0.0, "P_disc": 0.0}
        elif cat == "p2g":
            s, _ = state.p2g.get(comp.id, (comp.spec.initial_state, comp.spec.steps_in_state))
            cmd[comp.id] = {"mode": p2gm.HOT if s == p2gm.ON else s, "P_on": 0.0}
        elif cat in ("converter", "generator"):
            cmd[comp.id] = {"P_out": 0.0}
        elif cat == "cogen":
            cmd[comp.id] = {"P_in": 0.0}
        elif cat == "res":
            cmd[comp.id] = {"curtail": 0.0}
        elif cat == "consumer":
            cmd[comp.id] = {"shed": 0.0}
        elif cat == "grid_tie":
            cmd[comp.id] = {"P_imp": 0.0, "P_exp": 0.0}
    return cmd


def _clip(value, lo, hi, what, events):
    if value < lo - 1e-9 or value > hi + 1e-9:
        events.append(f"{what}: {value:.6g} clipped to [{lo:.6g}, {hi:.6g}]")
    return min(max(value, lo), hi)


def step_plant(net: Network, state: DistrictState, command: dict, data: ScenarioData,
               now: int) -> tuple[DistrictState, StepRecord]:
    """Apply ``command`` against the true profiles at ``now`` and advance the state."""
    dt = data.dt_hours
    new = state.copy()
    events: list[str] = []
    flows: dict = {}
    costs: dict = {}
    qty: dict = {}

    def add_cost(cat, carrier, value):
        key = (cat, carrier.value)
        costs[key] = costs.get(key, 0.0) + value

    def inject(cid, nid, kw):
        flows[(cid, nid)] = flows.get((cid, nid), 0.0) + kw

    slack_ties = {}
    for comp in net.components:
        cid, cat, p = comp.id, comp.category, comp.spec
        c = command.get(cid, {})
        if cat in STORAGE_CATEGORIES or cat == "ev":
            nid = comp.input_nodes[0]
            e0 = state.soc.get(cid, p.e_init)
            e0 = _clip(e0, p.e_min, p.e_max, f"{cid} soc", events)
            loss = getattr(p, "loss_per_step", 0.0)
            avail = True
            cmax, dmax = p.p_char_max, p.p_disc_max
            trip = 0.0
            if cat == "ev":
                avail = bool(data.ev_available[cid][now]) if cid in data.ev_available else True
                if not avail:
                    cmax = dmax = 0.0
                trip = sum(kwh for k, kwh in p.trips if k == now)
            pc = _clip(c.get("P_char", 0.0), 0.0, cmax, f"{cid} P_char", events)
            pd = _clip(c.get("P_disc", 0.0), 0.0, dmax, f"{cid} P_disc", events)
            if pc > 0 and pd > 0:
                events.append(f"{cid}: simultaneous charge/discharge, netted")
                if pc * p.eta >= pd / p.eta:
                    pc, pd = pc - pd, 0.0
                else:
                    pc, pd = 0.0, pd - pc
            base = (1.0 - loss) * e0 - trip
            # keep the state of charge within bounds by trimming the applied power
            room = max((p.e_max - base) / (dt * p.eta), 0.0)
            if pc > room:
                if pc > room + 1e-9:
                    events.append(f"{cid}: charge {pc:.6g} trimmed to {room:.6g} at full storage")
                pc = room
            avail_e = max((base - p.e_min) * p.eta / dt, 0.0)
            if pd > avail_e:
                if pd > avail_e + 1e-9:
                    events.append(f"{cid}: discharge {pd:.6g} trimmed to {avail_e:.6g} at empty storage")
                pd = avail_e
            e1 = base + dt * p.eta * pc - dt / p.eta * pd
            if e1 < p.e_min - 1e-9:
                events.append(f"{cid}: state of charge {e1:.6g} below minimum after trip")
            elif p.e_min - 1e-9 <= e1 < p.e_min:
                e1 = p.e_min  # round-off, keeps the next plan's initial state valid
            elif p.e_max < e1 <= p.e_max + 1e-9:
                e1 = p.e_max
            new.soc[cid] = e1
            inject(cid, nid, pd - pc)
            qty.update({(cid, "P_char"): pc, (cid, "P_disc"): pd, (cid, "E"): e1,
                        (cid, "standing_loss"): loss * e0, (cid, "trip"): trip})
            if getattr(p, "f_use", 0.0):
                add_cost("cycling", p.carrier, p.f_use * dt * (pc + pd))
        elif cat == "p2g":
            s0, k0 = state.p2g.get(cid, (p.initial_state, p.steps_in_state))
            mode = c.get("mode", s0)
            t_oh, t_ho = p.lag_steps(dt)
            if not p2gm.accepts([mode], s0, k0, t_oh, t_ho):
                events.append(f"{cid}: transition {s0}->{mode} not allowed, holding {s0}")
                mode = s0
            pon = 0.0
            if mode == p2gm.ON:
                pon = _clip(c.get("P_on", p.p_min), p.p_min, p.p_max, f"{cid} P_on", events)
            if mode != s0:
                new.p2g[cid] = (mode, 1)
            else:
                new.p2g[cid] = (mode, None if k0 is None else k0 + 1)
            p_in = pon + (p.p_hot if mode == p2gm.HOT else 0.0)
            inject(cid, comp.input_nodes[0], -p_in)
            inject(cid, comp.output_nodes[0], p.kappa * pon)
            qty.update({(cid, "mode"): mode, (cid, "P_on"): pon, (cid, "P_in"): p_in,
                        (cid, "P_out"): p.kappa * pon})
        elif cat == "converter":
            po = _clip(c.get("P_out", 0.0), 0.0, p.p_out_max, f"{cid} P_out", events)
            if po < 1e-9:
                po = 0.0
            elif p.must_run_binary and po < p.p_out_min - 1e-9:
                events.append(f"{cid}: output {po:.6g} raised to minimum load")
                po = p.p_out_min
            inject(cid, comp.output_nodes[0], po)
            inject(cid, comp.input_nodes[0], -po / p.efficiency)
            qty[(cid, "P_out")] = po
            new.last_power[cid] = po
        elif cat == "cogen":
            pi = _clip(c.get("P_in", 0.0), 0.0, p.p_in_max, f"{cid} P_in", events)
            if pi < 1e-9:
                pi = 0.0
            elif pi < p.p_in_min - 1e-9:
                pi = p.p_in_min
                events.append(f"{cid}: input raised to minimum load")
            inject(cid, comp.input_nodes[0], -pi)
            for nid in comp.output_nodes:
                eta = p.eta_elec if net.node(nid).carrier == Carrier.ELECTRICITY else p.eta_heat
                inject(cid, nid, eta * pi)
            qty[(cid, "P_in")] = pi
            new.last_power[cid] = pi
        elif cat == "generator":
            po = _clip(c.get("P_out", 0.0), 0.0, p.p_max, f"{cid} P_out", events)
            if po < 1e-9:
                po = 0.0
            elif po < p.p_min - 1e-9:
                po = p.p_min
                events.append(f"{cid}: output raised to minimum load")
            inject(cid, comp.output_nodes[0], po)
            qty[(cid, "P_out")] = po
            new.last_power[cid] = po
            if p.fuel_cost:
                add_cost("fuel", p.carrier, p.fuel_cost * dt * po)
        elif cat == "res":
            g = float(data.generation[cid][now]) if cid in data.generation else p.generation_profile[now]
            frac = _clip(c.get("curtail", 0.0), 0.0, 1.0, f"{cid} curtail", events) if p.curtailable else 0.0
            inject(cid, comp.output_nodes[0], g * (1 - frac))
            qty.update({(cid, "available"): g, (cid, "curtailed"): g * frac})
            if p.curtail_cost:
                add_cost("curtailment", p.carrier, p.curtail_cost * dt * g * frac)
        elif cat == "consumer":
            d = float(data.demand[cid][now]) if cid in data.demand else p.demand_profile[now]
            frac = _clip(c.get("shed", 0.0), 0.0, 1.0, f"{cid} shed", events) if p.sheddable else 0.0
            inject(cid, comp.input_nodes[0], -d * (1 - frac))
            qty.update({(cid, "demand"): d, (cid, "shed"): d * frac})
        elif cat == "grid_tie":
            nid = comp.input_nodes[0]
            if p.slack and nid not in slack_ties:
                slack_ties[nid] = comp
                continue
            imp = _clip(c.get("P_imp", 0.0), 0.0, p.p_import_max, f"{cid} P_imp", events)
            exp = _clip(c.get("P_exp", 0.0), 0.0, p.p_export_max, f"{cid} P_exp", events)
            _settle_tie(comp, imp, exp, data, now, inject, add_cost, qty, new)

    # settle each node's imbalance on its slack tie, then by shedding or curtailment
    for node in net.nodes:
        nid = node.id
        resid = sum(v for (cid, n), v in flows.items() if n == nid)
        tie = slack_ties.get(nid)
        if tie is not None:
            p = tie.spec
            need = -resid
            imp = _clip(max(need, 0.0), 0.0, p.p_import_max, f"{tie.id} slack import", events)
            exp = _clip(max(-need, 0.0), 0.0, p.p_export_max, f"{tie.id} slack export", events)
            _settle_tie(tie, imp, exp, data, now, inject, add_cost, qty, new)
            resid = sum(v for (cid, n), v in flows.items() if n == nid)
        if abs(resid) > 1e-9:
            resid = _shed_or_curtail(net, nid, resid, flows, qty, dt, add_cost, events)
        if abs(resid) > 1e-9:
            kind = "unserved" if resid < 0 else "spilled"
            events.append(f"node {nid}: {abs(resid):.6g} kW {kind}")
            qty[(nid, kind)] = abs(resid)
            flows[(f"_{kind}", nid)] = -resid
    for comp in net.components:
        if comp.category == "consumer" and comp.spec.sheddable:
            shed = qty.get((comp.id, "shed"), 0.0)
            if shed:
                add_cost("shedding", comp.spec.carrier, comp.spec.shed_cost * dt * shed)
    for ev in events:
        logger.info("step %d: %s", now, ev)
    return new, StepRecord(now, flows, costs, qty, events)


def _settle_tie(comp, imp, exp, data, now, inject, add_cost, qty, new):
    p = comp.spec
    dt = data.dt_hours
    buy = float(data.import_price[comp.id][now]) if comp.id in data.import_price else p.import_price_profile[now]
    sell = float(data.export_price[comp.id][now]) if comp.id in data.export_price else p.export_price_profile[now]
    inject(comp.id, comp.input_nodes[0], imp - exp)
    add_cost("grid", p.carrier, dt * (buy * imp - sell * exp))
    qty.update({(comp.id, "P_imp"): imp, (comp.id, "P_exp"): exp})
    new.last_power[comp.id] = imp - exp


def _shed_or_curtail(net, nid, resid, flows, qty, dt, add_cost, events):
    """Proportional shedding (deficit) or curtailment (surplus) at one node."""
    if resid < 0:
        pool = [c for c in net.components if c.category == "consumer" and c.spec.sheddable
                and nid in c.input_nodes]
        served = {c.id: -flows.get((c.id, nid), 0.0) for c in pool}
        total = sum(served.values())
        if total <= 0:
            return resid
        cut = min(-resid, total)
        for c in pool:
            share = cut * served[c.id] / total
            flows[(c.id, nid)] += share
            qty[(c.id, "shed")] = qty.get((c.id, "shed"), 0.0) + share
        events.append(f"node {nid}: deficit {cut:.6g} kW settled by shedding")
        return resid + cut
    pool = [c for c in net.components if c.category == "res" and c.spec.curtailable
            and nid in c.output_nodes]
    out = {c.id: flows.get((c.id, nid), 0.0) for c in pool}
    total = sum(out.values())
    if total <= 0:
        return resid
    cut = min(resid, total)
    for c in pool:
        share = cut * out[c.id] / total
        flows[(c.id, nid)] -= share
        qty[(c.id, "curtailed")] = qty.get((c.id, "curtailed"), 0.0) + share
        if c.spec.curtail_cost:
            add_cost("curtailment", c.spec.carrier, c.spec.curtail_cost * dt * share)
    events.append(f"node {nid}: surplus {cut:.6g} kW settled by curtailment")
    return resid - cut


# -- closed loop -----------------------------------------------------------

@dataclass
class SolveStats:
    step: int
    status: str
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_iterations: int
    wall_time_s: float
    applied: str  # "plan", "incumbent", "previous_plan" or "idle"


@dataclass
class SimulationResult:
    net: Network
    horizon: HorizonSpec
    records: list
    stats: list
    states: list          # DistrictState before each step, plus the final one
    plans: list = field(default_factory=list, repr=False)
    kpis: Optional["Kpis"] = None


def run_closed_loop(net: Network, h: HorizonSpec, data: ScenarioData, policy: ForecastPolicy,
                    steps: int, config: Optional[SolverConfig] = None,
                    keep_plans: bool = False) -> SimulationResult:
    """Forecast, plan, apply the first step, advance; ``steps`` times."""
    config = config or SolverConfig()
    if abs(data.dt_hours - h.dt_hours) > 1e-12:
        raise ValueError("scenario and horizon step lengths differ")
    if data.span < steps + h.steps - 1:
        raise ValueError(f"scenario span {data.span} shorter than {steps} steps plus horizon {h.steps}")
    state = data.initial_state.copy()
    for comp in net.components:
        p = comp.spec
        if comp.category in STORAGE_CATEGORIES or comp.category == "ev":
            state.soc.setdefault(comp.id, p.e_init)
        elif comp.category == "p2g":
            state.p2g.setdefault(comp.id, (p.initial_state, p.steps_in_state))
    records, stats, states, plans = [], [], [state.copy()], []
    prev = None  # (schedule, index, values, step made)
    for now in range(steps):
        fc = make_forecast(policy, data, now, h, net)
        ocp = assemble(net, h, state, fc)
        hint = shifted_hint(None, prev[1], prev[2], ocp, now - prev[3]) if prev else None
        t0 = time.perf_counter()
        sol = solve_milp(ocp.model, config, hint)
        applied = "plan"
        cmd = None
        if sol.has_incumbent:
            schedule = extract_schedule(sol, ocp, config)
            cmd = command_from_schedule(schedule, net, 0)
            if sol.status != MilpStatus.OPTIMAL:
                applied = "incumbent"
                logger.warning("step %d: %s, applying incumbent (gap %.3g)", now,
                               sol.status.value, sol.gap)
            prev = (schedule, ocp.index, sol.values, now)
            if keep_plans:
                plans.append(schedule)
        else:
            if prev is not None and now - prev[3] < h.steps:
                cmd = command_from_schedule(prev[0], net, now - prev[3])
                applied = "previous_plan"
            else:
                cmd = idle_command(net, state)
                applied = "idle"
            logger.warning("step %d: solver returned %s without a plan, applying %s",
                           now, sol.status.value, applied)
        stats.append(SolveStats(now, sol.status.value, sol.objective, sol.bound, sol.gap,
                                sol.node_count, sol.lp_iterations, time.perf_counter() - t0,
                                applied))
        state, rec = step_plant(net, state, cmd, data, now)
        records.append(rec)
        states.append(state.copy())
    result = SimulationResult(net, h, records, stats, states, plans)
    result.kpis = compute_kpis(result)
    return result


# -- KPIs ------------------------------------------------------------------

@dataclass
class Kpis:
    total_cost: float
    cost_per_carrier: dict
    grid_cost_per_carrier: dict
    fuel_cost: float
    gas_produced_m3: float
    self_consumption_ratio: float
    self_consumption_undefined: bool
    shed_kwh: float
    curtailed_kwh: float
    exported_kwh: dict
    imported_kwh: dict
    res_generation_kwh: float

    def table(self) -> dict:
        """The headline figures, in a stable order."""
        return {
            "gas_cost": self.grid_cost_per_carrier.get("gas", 0.0),
            "biomass_cost": self.fuel_cost,
            "electricity_cost": self.grid_cost_per_carrier.get("electricity", 0.0),
            "total_cost": self.total_cost,
            "gas_produced_m3": self.gas_produced_m3,
            "self_consumption_ratio": self.self_consumption_ratio,
        }


def compute_kpis(result: SimulationResult) -> Kpis:
    net = result.net
    dt = result.horizon.dt_hours
    carriers = [c.value for c in Carrier]
    per_carrier = {c: 0.0 for c in carriers}
    grid = {c: 0.0 for c in carriers}
    fuel = 0.0
    total = 0.0
    for rec in result.records:
        for (cat, carrier), v in rec.costs.items():
            per_carrier[carrier] += v
            total += v
            if cat == "grid":
                grid[carrier] += v
            elif cat == "fuel":
                fuel += v
    gas_m3 = 0.0
    shed = curtailed = res_gen = 0.0
    exported = {c: 0.0 for c in carriers}
    imported = {c: 0.0 for c in carriers}
    for comp in net.components:
        cid, cat = comp.id, comp.category
        for rec in result.records:
            q = rec.quantities
            if cat == "p2g":
                gas_m3 += dt * q.get((cid, "P_out"), 0.0) / comp.spec.calorific_value
            elif cat == "consumer":
                shed += dt * q.get((cid, "shed"), 0.0)
            elif cat == "res":
                cur = q.get((cid, "curtailed"), 0.0)
                curtailed += dt * cur
                if comp.spec.carrier == Carrier.ELECTRICITY:
                    res_gen += dt * (q.get((cid, "available"), 0.0) - cur)
            elif cat == "grid_tie":
                exported[comp.spec.carrier.value] += dt * q.get((cid, "P_exp"), 0.0)
                imported[comp.spec.carrier.value] += dt * q.get((cid, "P_imp"), 0.0)
    exp_e = exported[Carrier.ELECTRICITY.value]
    if res_gen <= 0:
        ratio, undefined = 1.0, True
    else:
        ratio, undefined = min(max(1.0 - exp_e / res_gen, 0.0), 1.0), False
    return Kpis(total, per_carrier, grid, fuel, gas_m3, ratio, undefined, shed, curtailed,
                exported, imported, res_gen)


def storage_accounting(result: SimulationResult) -> dict:
    """Per storage: ``(charged*eta - discharged/eta - losses - trips) - (E_final - E_initial)``."""
    dt = result.horizon.dt_hours
    out = {}
    for comp in result.net.components:
        if comp.category not in STORAGE_CATEGORIES and comp.category != "ev":
            continue
        cid, p = comp.id, comp.spec
        flow = 0.0
        for rec in result.records:
            q = rec.quantities
            flow += (dt * p.eta * q[(cid, "P_char")] - dt / p.eta * q[(cid, "P_disc")]
                     - q[(cid, "standing_loss")] - q[(cid, "trip")])
        e0 = result.states[0].soc[cid]
        e1 = result.states[-1].soc[cid]
        out[cid] = flow - (e1 - e0)
    return out
