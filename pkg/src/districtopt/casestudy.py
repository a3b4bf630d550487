"""Small multi-carrier district used by examples, benchmarks and acceptance runs.

Electricity, heat and gas nodes; PV and wind; electric and heat loads; a
gas boiler with a minimum load; a biomass boiler; a hot water tank; an
optional power-to-gas unit; and three grid ties (electricity, gas, and a
heat dump). Synthetic hourly profiles are scaled to given energy totals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import (ConsumerParams, ConverterParams, GeneratorParams, GridTieParams,
                         P2gParams, ResParams, StorageParams)
from .network import Carrier, ComponentRef, HorizonSpec, Network, Node

E, H, G = Carrier.ELECTRICITY, Carrier.HEAT, Carrier.GAS

# monthly energy totals, kWh
ELEC_DEMAND_KWH = 2383.0
HEAT_DEMAND_KWH = 15354.0
PV_KWH = 637.0
WIND_KWH = 3594.0

WATER_KWH_PER_M3_K = 1.163


def tank_capacity_kwh(volume_m3: float, swing_k: float = 30.0) -> float:
    return volume_m3 * WATER_KWH_PER_M3_K * swing_k


@dataclass(frozen=True)
class DistrictParams:
    boiler_max: float = 30.0
    boiler_min: float = 5.0
    boiler_efficiency: float = 0.9
    p2g_min: float = 5.0
    p2g_max: float = 10.0
    p2g_kappa: float = 0.75
    p2g_hot: float = 0.5
    p2g_t_off_hot: float = 2.0
    p2g_t_hot_off: float = 2.0
    biomass_max: float = 10.0
    biomass_cost: float = 0.2
    tank_m3: float = 2.0
    tank_power: float = 15.0
    tank_eta: float = 0.95
    tank_loss: float = 0.002
    tank_value: float = 0.1
    elec_buy: float = 0.2
    elec_sell: float = 0.04
    gas_buy: float = 0.13
    shed_cost: float = 1.0


@dataclass(frozen=True)
class Profiles:
    elec_demand: np.ndarray
    heat_demand: np.ndarray
    pv: np.ndarray
    wind: np.ndarray

    def __len__(self):
        return len(self.elec_demand)


def _scaled(x: np.ndarray, total: float, steps: int, dt: float) -> np.ndarray:
    return x * (total / (dt * x[:steps].sum()))


def synthetic_profiles(steps: int = 720, extra: int = 24, seed: int = 0) -> Profiles:
    """Hourly profiles whose first ``steps`` values match the monthly totals."""
    rng = np.random.default_rng(seed)
    n = steps + extra
    hour = np.arange(n) % 24
    day = np.arange(n) // 24
    ndays = day[-1] + 1

    elec = (2.2 + 1.6 * np.exp(-0.5 * ((hour - 8) / 1.5) ** 2)
            + 2.4 * np.exp(-0.5 * ((hour - 19) / 2.0) ** 2))
    elec = elec * (1 + 0.08 * rng.standard_normal(n)).clip(0.7, 1.3)

    day_temp = 2.0 * rng.standard_normal(ndays)
    heat = 1.0 + 0.12 * np.cos(2 * np.pi * (hour - 6) / 24) + 0.05 * day_temp[day] / 2.0

    clear = rng.uniform(0.2, 1.0, ndays)
    pv = np.clip(np.sin(np.pi * (hour - 6) / 13), 0, None) ** 1.5 * clear[day]

    # wind: smooth log-normal process with multi-day weather fronts
    z = np.zeros(n)
    for k in range(1, n):
        z[k] = 0.96 * z[k - 1] + 0.28 * rng.standard_normal()
    wind = np.exp(1.1 * z)
    wind = np.minimum(wind, np.quantile(wind, 0.97))

    heat = _scaled(heat, HEAT_DEMAND_KWH, steps, 1.0)
    return Profiles(_scaled(elec, ELEC_DEMAND_KWH, steps, 1.0), heat,
                    _scaled(pv, PV_KWH, steps, 1.0), _scaled(wind, WIND_KWH, steps, 1.0))


def district(profiles: Profiles, params: DistrictParams = DistrictParams(),
             with_p2g: bool = True) -> Network:
    """The district network; profiles provide the nominal (true) series."""
    p = params
    n = len(profiles)
    nodes = (Node("elec", E), Node("heat", H), Node("gas", G))
    comps = [
        ComponentRef("pv", ResParams(profiles.pv, curtailable=True), (), ("elec",)),
        ComponentRef("wind", ResParams(profiles.wind, curtailable=True), (), ("elec",)),
        ComponentRef("elec_load", ConsumerParams(profiles.elec_demand, sheddable=True,
                                                 shed_cost=p.shed_cost, carrier=E), ("elec",), ()),
        ComponentRef("heat_load", ConsumerParams(profiles.heat_demand, sheddable=True,
                                                 shed_cost=p.shed_cost, carrier=H), ("heat",), ()),
        ComponentRef("elec_grid", GridTieParams([p.elec_buy] * n, [p.elec_sell] * n, carrier=E),
                     ("elec",), ("elec",)),
        ComponentRef("gas_grid", GridTieParams([p.gas_buy] * n, [0.0] * n, p_export_max=0.0,
                                               carrier=G), ("gas",), ("gas",)),
        ComponentRef("heat_dump", GridTieParams([0.0] * n, [0.0] * n, p_import_max=0.0,
                                                carrier=H, slack=False), ("heat",), ("heat",)),
        ComponentRef("boiler", ConverterParams(p.boiler_efficiency, p.boiler_max, p.boiler_min,
                                               must_run_binary=True, input_carrier=G,
                                               output_carrier=H), ("gas",), ("heat",)),
        ComponentRef("biomass", GeneratorParams(p.biomass_max, 0.0, p.biomass_cost, carrier=H),
                     (), ("heat",)),
        ComponentRef("tank", StorageParams(p.tank_power, p.tank_power, p.tank_eta,
                                           tank_capacity_kwh(p.tank_m3), 0.0,
                                           0.5 * tank_capacity_kwh(p.tank_m3),
                                           f_fin_soc=p.tank_value, loss_per_step=p.tank_loss),
                     ("heat",), ("heat",)),
    ]
    if with_p2g:
        comps.append(ComponentRef("p2g", P2gParams(p.p2g_kappa, p.p2g_min, p.p2g_max, p.p2g_hot,
                                                   p.p2g_t_off_hot, p.p2g_t_hot_off),
                                  ("elec",), ("gas",)))
    return Network(nodes, tuple(comps))


def heat_source_costs(params: DistrictParams) -> dict[str, float]:
    """Marginal cost of one kWh of heat from each source (P2G chain valued at lost export)."""
    p = params
    return {
        "biomass": p.biomass_cost,
        "gas_boiler": p.gas_buy / p.boiler_efficiency,
        "p2g_boiler": p.elec_sell / p.p2g_kappa / p.boiler_efficiency,
    }


HOURLY = HorizonSpec(24, 1.0)
