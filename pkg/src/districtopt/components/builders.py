"""Per-category MIL model builders.

Each builder returns a self-contained :class:`ModelFragment`: a small
``MilpModel`` over the component's own variables, the power it draws from
or injects into each carrier per step (port expressions), and its cost terms
by category. ``ocp.assemble`` stitches fragments together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..milp import EQ, GE, LE, LinExpr, MilpModel
from ..network import Carrier, HorizonSpec
from . import p2g as p2gm
from .params import (BatteryParams, CogenParams, ConsumerParams, ConverterParams, EvParams,
                     GeneratorParams, GridTieParams, P2gParams, ResParams, StorageParams)

COST_CATEGORIES = ("grid", "fuel", "cycling", "shedding", "curtailment", "regularization",
                   "terminal")


@dataclass
class ModelFragment:
    name: str
    category: str
    model: MilpModel
    index: dict = field(default_factory=dict)      # (quantity, step) -> local var id
    ports_in: dict = field(default_factory=dict)   # Carrier -> [LinExpr per step]
    ports_out: dict = field(default_factory=dict)  # Carrier -> [LinExpr per step]
    costs: dict = field(default_factory=dict)      # cost category -> LinExpr

    def var(self, quantity: str, step: int) -> int:
        return self.index[(quantity, step)]

    def x(self, quantity: str, step: int) -> LinExpr:
        return LinExpr.var(self.index[(quantity, step)])

    def add_var(self, quantity, step, lb=0.0, ub=math.inf, binary=False) -> LinExpr:
        vid = self.model.add_variable(f"{self.name}.{quantity}.t{step}", lb, ub, binary)
        self.index[(quantity, step)] = vid
        return LinExpr.var(vid)

    def row(self, expr, sense, rhs, label, step):
        self.model.add_constraint(expr, sense, rhs, f"{self.name}.{label}.t{step}")

    def cost(self, category: str, expr: LinExpr):
        self.costs.setdefault(category, LinExpr()).iadd(expr)

    def finish(self) -> "ModelFragment":
        obj = LinExpr()
        for cat in COST_CATEGORIES:
            if cat in self.costs:
                obj.iadd(self.costs[cat])
        self.model.set_objective(obj)
        return self


def _frag(name, category):
    return ModelFragment(name, category, MilpModel(name=name))


def _horizon_profile(profile, h: HorizonSpec, what: str):
    if len(profile) < h.steps:
        raise ValueError(f"{what} has {len(profile)} values, horizon needs {h.steps}")
    return profile[: h.steps]


def _rate_cost(f: ModelFragment, quantity: str, series, rate_cost: float,
               initial: Optional[float]):
    """Linearized ``rate_cost * |P(t) - P(t-1)|`` with two slacks per step."""
    if rate_cost <= 0:
        return
    for t in range(len(series)):
        if t == 0:
            if initial is None:
                continue
            prev = LinExpr(const=initial)
        else:
            prev = series[t - 1]
        up = f.add_var(f"{quantity}_up", t)
        dn = f.add_var(f"{quantity}_dn", t)
        f.row(series[t] - prev - up + dn, EQ, 0.0, f"{quantity}_rate", t)
        f.cost("regularization", rate_cost * (up + dn))


def _storage(f: ModelFragment, p: BatteryParams, h: HorizonSpec, loss: float):
    p.check()
    H, dt = h.steps, h.dt_hours
    need_bin = p.p_char_max > 0 and p.p_disc_max > 0
    carrier = p.carrier
    f.ports_in[carrier] = []
    f.ports_out[carrier] = []
    prev = LinExpr(const=p.e_init)
    for t in range(H):
        pc = f.add_var("P_char", t, 0.0, p.p_char_max)
        pd = f.add_var("P_disc", t, 0.0, p.p_disc_max)
        if need_bin:
            d = f.add_var("delta", t, 0.0, 1.0, binary=True)
            f.row(pd + p.p_disc_max * d, LE, p.p_disc_max, "disc_max", t)
            f.row(pc - p.p_char_max * d, LE, 0.0, "char_max", t)
        e = f.add_var("E", t + 1, p.e_min, p.e_max)
        # charging raises the state of charge, discharging lowers it
        f.row(e - (1.0 - loss) * prev - dt * p.eta * pc + (dt / p.eta) * pd, EQ, 0.0, "soc", t)
        f.ports_in[carrier].append(pc)
        f.ports_out[carrier].append(pd)
        if p.f_use:
            f.cost("cycling", p.f_use * dt * (pc + pd))
        prev = e
    if p.f_fin_soc:
        f.cost("terminal", -p.f_fin_soc * prev)
    return f.finish()


def build_battery(params: BatteryParams, h: HorizonSpec, name: str = "battery") -> ModelFragment:
    return _storage(_frag(name, "battery"), params, h, 0.0)


def build_storage_thermal(params: StorageParams, h: HorizonSpec,
                          name: str = "storage") -> ModelFragment:
    return _storage(_frag(name, "thermal_storage"), params, h, params.loss_per_step)


def build_p2g(params: P2gParams, h: HorizonSpec, name: str = "p2g") -> ModelFragment:
    params.check()
    H = h.steps
    t_oh, t_ho = params.lag_steps(h.dt_hours)
    if max(t_oh, t_ho) > H:
        raise ValueError(f"dwell lag ({max(t_oh, t_ho)} steps) exceeds the horizon ({H} steps)")
    f = _frag(name, "p2g")
    k = params.steps_in_state

    def hist(t):  # state before the horizon, None if unknown
        if k is None or -t <= k:
            return params.initial_state
        return None

    states = {"off": [], "hot": [], "on": []}

    def st(s, t) -> LinExpr:
        if t >= 0:
            return states[s][t]
        return LinExpr(const=1.0 if hist(t) == s else 0.0)

    f.ports_in[Carrier.ELECTRICITY] = []
    f.ports_out[Carrier.GAS] = []
    for t in range(H):
        for s in ("off", "hot", "on"):
            states[s].append(f.add_var(f"delta_{s}", t, 0.0, 1.0, binary=True))
        f.row(states["off"][t] + states["hot"][t] + states["on"][t], EQ, 1.0, "one_state", t)
    lags = {"off2hot": t_oh, "hot2off": t_ho, "hot2on": 1, "on2hot": 1}
    trans_at = []
    for t in range(H):
        trans = {}
        trans_at.append(trans)
        for tname, (src, dst) in p2gm.TRANSITIONS.items():
            tr = f.add_var(f"delta_{tname}", t, 0.0, 1.0, binary=True)
            trans[tname] = tr
            rows = p2gm.lagged_rows(tr, lambda i, src=src, t=t: st(src, t - i), st(dst, t),
                                    lags[tname])
            for j, (expr, sense, rhs) in enumerate(rows):
                _add_or_check(f, expr, sense, rhs, f"{tname}_{j}", t)
        f.row(trans["off2hot"] + trans["hot2off"] + trans["hot2on"] + trans["on2hot"], LE, 1.0,
              "one_transition", t)
        _add_or_check(f, st("on", t) + st("off", t - 1), LE, 1.0, "no_off_on", t)
        _add_or_check(f, st("off", t) + st("on", t - 1), LE, 1.0, "no_on_off", t)
    _p2g_strengthening(f, params, states, trans_at, st, t_oh, t_ho)
    for t in range(H):
        pon = f.add_var("P_on", t, 0.0, params.p_max)
        f.row(pon - params.p_min * states["on"][t], GE, 0.0, "p_min", t)
        f.row(pon - params.p_max * states["on"][t], LE, 0.0, "p_max", t)
        f.ports_in[Carrier.ELECTRICITY].append(params.p_hot * states["hot"][t] + pon)
        f.ports_out[Carrier.GAS].append(params.kappa * pon)
    return f.finish()


def _p2g_strengthening(f, params, states, trans_at, st, t_oh, t_ho):
    """Valid rows that tighten the relaxation without cutting integer plans.

    State flow: each indicator changes exactly by the transitions entering
    minus those leaving it. Dwell windows: an OFF run entered less than
    ``t_oh`` steps ago is still OFF, and a HOT run entered less than ``t_ho``
    steps ago cannot end in OFF.
    """
    k = params.steps_in_state

    def entered(state, t) -> LinExpr:
        if t >= 0:
            e = LinExpr()
            for name, (_, dst) in p2gm.TRANSITIONS.items():
                if dst == state:
                    e.iadd(trans_at[t][name])
            return e
        hit = k is not None and t == -k and params.initial_state == state
        return LinExpr(const=1.0 if hit else 0.0)

    for t in range(len(trans_at)):
        for s in ("off", "hot", "on"):
            left = LinExpr()
            for name, (src, _) in p2gm.TRANSITIONS.items():
                if src == s:
                    left.iadd(trans_at[t][name])
            f.row(st(s, t) - st(s, t - 1) - entered(s, t) + left, EQ, 0.0, f"flow_{s}", t)
        if t_oh > 1:
            window = LinExpr()
            for u in range(t - t_oh + 1, t + 1):
                window.iadd(entered("off", u))
            _add_or_check(f, st("off", t) - window, GE, 0.0, "off_dwell", t)
        if t_ho > 1:
            window = trans_at[t]["hot2off"].copy()
            for u in range(t - t_ho + 1, t):
                window.iadd(entered("hot", u))
            _add_or_check(f, window, LE, 1.0, "hot_dwell", t)


def _add_or_check(f: ModelFragment, expr: LinExpr, sense, rhs, label, t):
    """Add a row, or verify it when history constants leave no variables."""
    e = expr.normalized()
    if e.terms:
        f.row(e, sense, rhs, label, t)
        return
    v = e.const
    ok = v <= rhs + 1e-9 if sense == LE else v >= rhs - 1e-9 if sense == GE else abs(v - rhs) < 1e-9
    if not ok:
        raise ValueError(f"{f.name}: initial history violates {label}")


def build_consumer(params: ConsumerParams, h: HorizonSpec, name: str = "consumer") -> ModelFragment:
    params.check()
    f = _frag(name, "consumer")
    demand = _horizon_profile(params.demand_profile, h, f"{name} demand")
    port = []
    for t, d in enumerate(demand):
        if params.sheddable and d > 0:
            s = f.add_var("shed", t, 0.0, 1.0)
            port.append(d - d * s)
            f.cost("shedding", params.shed_cost * h.dt_hours * d * s)
        else:
            port.append(LinExpr(const=d))
    f.ports_in[params.carrier] = port
    return f.finish()


def build_res(params: ResParams, h: HorizonSpec, name: str = "res") -> ModelFragment:
    params.check()
    f = _frag(name, "res")
    gen = _horizon_profile(params.generation_profile, h, f"{name} generation")
    port = []
    for t, g in enumerate(gen):
        if params.curtailable and g > 0:
            c = f.add_var("curtail", t, 0.0, 1.0)
            port.append(g - g * c)
            f.cost("curtailment", params.curtail_cost * h.dt_hours * g * c)
        else:
            port.append(LinExpr(const=g))
    f.ports_out[params.carrier] = port
    return f.finish()


def _semicontinuous(f, quantity, t, lo, hi, binary):
    """``lo*u <= P <= hi*u`` with ``u`` binary, or ``0 <= P <= hi`` when ``lo`` is 0."""
    if binary and lo > 0:
        p = f.add_var(quantity, t, 0.0, hi)
        u = f.add_var("u", t, 0.0, 1.0, binary=True)
        f.row(p - lo * u, GE, 0.0, f"{quantity}_min", t)
        f.row(p - hi * u, LE, 0.0, f"{quantity}_max", t)
        return p
    return f.add_var(quantity, t, 0.0, hi)


def build_converter(params: ConverterParams, h: HorizonSpec, name: str = "converter") -> ModelFragment:
    params.check()
    f = _frag(name, "converter")
    outs = [_semicontinuous(f, "P_out", t, params.p_out_min, params.p_out_max,
                            params.must_run_binary) for t in range(h.steps)]
    f.ports_out[params.output_carrier] = outs
    f.ports_in[params.input_carrier] = [p / params.efficiency for p in outs]
    _rate_cost(f, "P_out", outs, params.rate_cost, params.initial_power)
    return f.finish()


def build_cogen(params: CogenParams, h: HorizonSpec, name: str = "cogen") -> ModelFragment:
    params.check()
    f = _frag(name, "cogen")
    ins = [_semicontinuous(f, "P_in", t, params.p_in_min, params.p_in_max, True)
           for t in range(h.steps)]
    f.ports_in[Carrier.GAS] = ins
    f.ports_out[Carrier.ELECTRICITY] = [params.eta_elec * p for p in ins]
    f.ports_out[Carrier.HEAT] = [params.eta_heat * p for p in ins]
    _rate_cost(f, "P_in", ins, params.rate_cost, params.initial_power)
    return f.finish()


def build_generator(params: GeneratorParams, h: HorizonSpec, name: str = "generator") -> ModelFragment:
    params.check()
    f = _frag(name, "generator")
    outs = [_semicontinuous(f, "P_out", t, params.p_min, params.p_max, True)
            for t in range(h.steps)]
    f.ports_out[params.carrier] = outs
    for p in outs:
        if params.fuel_cost:
            f.cost("fuel", params.fuel_cost * h.dt_hours * p)
    _rate_cost(f, "P_out", outs, params.rate_cost, params.initial_power)
    return f.finish()


def build_grid_tie(params: GridTieParams, h: HorizonSpec, name: str = "grid") -> ModelFragment:
    params.check()
    f = _frag(name, "grid_tie")
    buy = _horizon_profile(params.import_price_profile, h, f"{name} import price")
    sell = _horizon_profile(params.export_price_profile, h, f"{name} export price")
    # simultaneous import and export only pays off when selling beats buying
    need_bin = params.p_export_max > 0 and params.p_import_max > 0 and any(
        s > b for b, s in zip(buy, sell))
    if need_bin and not (math.isfinite(params.p_import_max) and math.isfinite(params.p_export_max)):
        raise ValueError(f"{name}: export price above import price needs finite power limits")
    ins, outs, net = [], [], []
    for t in range(h.steps):
        imp = f.add_var("P_imp", t, 0.0, params.p_import_max)
        exp = f.add_var("P_exp", t, 0.0, params.p_export_max)
        if need_bin:
            d = f.add_var("delta", t, 0.0, 1.0, binary=True)
            f.row(imp - params.p_import_max * d, LE, 0.0, "imp_max", t)
            f.row(exp + params.p_export_max * d, LE, params.p_export_max, "exp_max", t)
        outs.append(imp)
        ins.append(exp)
        net.append(imp - exp)
        f.cost("grid", h.dt_hours * (buy[t] * imp - sell[t] * exp))
    f.ports_out[params.carrier] = outs
    f.ports_in[params.carrier] = ins
    _rate_cost(f, "P_net", net, params.rate_cost, params.initial_power)
    return f.finish()


def build_ev(params: EvParams, h: HorizonSpec, name: str = "ev") -> ModelFragment:
    params.check()
    H, dt = h.steps, h.dt_hours
    avail = _horizon_profile(params.available, h, f"{name} availability")
    f = _frag(name, "ev")
    trips = {}
    for s, kwh in params.trips:
        trips[s] = trips.get(s, 0.0) + kwh
    targets = {}
    for s, kwh in params.departure_targets:
        targets[s] = max(targets.get(s, 0.0), kwh)
    f.ports_in[Carrier.ELECTRICITY] = []
    f.ports_out[Carrier.ELECTRICITY] = []
    prev = LinExpr(const=params.e_init)
    for t in range(H):
        cmax = params.p_char_max if avail[t] else 0.0
        dmax = params.p_disc_max if avail[t] else 0.0
        if params.control_mode == "onoff":
            pc = LinExpr() if cmax == 0 else cmax * f.add_var("u_char", t, 0.0, 1.0, binary=True)
            pd = LinExpr() if dmax == 0 else dmax * f.add_var("u_disc", t, 0.0, 1.0, binary=True)
            if cmax > 0 and dmax > 0:
                f.row(pc / cmax + pd / dmax, LE, 1.0, "one_mode", t)
        else:
            pc = f.add_var("P_char", t, 0.0, cmax)
            pd = f.add_var("P_disc", t, 0.0, dmax)
            if cmax > 0 and dmax > 0:
                d = f.add_var("delta", t, 0.0, 1.0, binary=True)
                f.row(pd + dmax * d, LE, dmax, "disc_max", t)
                f.row(pc - cmax * d, LE, 0.0, "char_max", t)
        e = f.add_var("E", t + 1, params.e_min, params.e_max)
        f.row(e - prev - dt * params.eta * pc + (dt / params.eta) * pd, EQ, -trips.get(t, 0.0),
              "soc", t)
        if t + 1 in targets:
            f.row(e, GE, targets[t + 1], "target", t + 1)
        f.ports_in[Carrier.ELECTRICITY].append(pc)
        f.ports_out[Carrier.ELECTRICITY].append(pd)
        prev = e
    return f.finish()


BUILDERS = {
    "battery": build_battery,
    "thermal_storage": build_storage_thermal,
    "p2g": build_p2g,
    "consumer": build_consumer,
    "converter": build_converter,
    "res": build_res,
    "cogen": build_cogen,
    "ev": build_ev,
    "generator": build_generator,
    "grid_tie": build_grid_tie,
}


def build(params, h: HorizonSpec, name: str) -> ModelFragment:
    return BUILDERS[params.category](params, h, name)
