"""Physical parameter records, one per component category.

Each record knows its category name, its carrier signature (carriers of the
input and output nodes it must be wired to) and how to sanity-check itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..network import Carrier

E, H, G = Carrier.ELECTRICITY, Carrier.HEAT, Carrier.GAS


def _profile(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class BatteryParams:
    p_char_max: float
    p_disc_max: float
    eta: float
    e_max: float
    e_min: float = 0.0
    e_init: float = 0.0
    f_use: float = 0.0
    f_fin_soc: Optional[float] = None  # None: resolved from tariffs when assembling
    carrier: Carrier = E

    category = "battery"

    def signature(self):
        return [self.carrier], [self.carrier]

    def check(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.p_char_max < 0 or self.p_disc_max < 0:
            raise ValueError("power limits must be non-negative")
        if not 0 <= self.e_min <= self.e_init <= self.e_max:
            raise ValueError(
                f"need 0 <= e_min <= e_init <= e_max, got {self.e_min}, {self.e_init}, {self.e_max}")


@dataclass(frozen=True)
class StorageParams(BatteryParams):
    """Thermal (or any lossy) storage: battery algebra plus a standing loss per step."""

    loss_per_step: float = 0.0
    carrier: Carrier = H

    category = "thermal_storage"

    def check(self):
        super().check()
        if not 0 <= self.loss_per_step < 1:
            raise ValueError(f"loss_per_step must be in [0, 1), got {self.loss_per_step}")


P2G_STATES = ("off", "hot", "on")


@dataclass(frozen=True)
class P2gParams:
    kappa: float
    p_min: float
    p_max: float
    p_hot: float = 0.0
    t_off_hot: float = 0.0
    t_hot_off: float = 0.0
    initial_state: str = "off"
    steps_in_state: Optional[int] = None  # None: the initial state has held forever
    calorific_value: float = 10.0         # kWh per m3, reporting only

    category = "p2g"

    def signature(self):
        return [E], [G]

    def check(self):
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must be in (0, 1], got {self.kappa}")
        if not 0 < self.p_min <= self.p_max:
            raise ValueError(f"need 0 < p_min <= p_max, got {self.p_min}, {self.p_max}")
        if self.p_hot < 0 or self.t_off_hot < 0 or self.t_hot_off < 0:
            raise ValueError("p_hot and dwell times must be non-negative")
        if self.initial_state not in P2G_STATES:
            raise ValueError(f"unknown initial state {self.initial_state!r}")
        if self.steps_in_state is not None and self.steps_in_state < 1:
            raise ValueError("steps_in_state must be >= 1")
        if self.calorific_value <= 0:
            raise ValueError("calorific_value must be positive")

    def lag_steps(self, dt_hours: float) -> tuple[int, int]:
        """Dwell requirements (OFF before HOT, HOT before OFF) in whole steps, at least 1."""
        def steps(t):
            return max(1, math.ceil(t / dt_hours - 1e-9))
        return steps(self.t_off_hot), steps(self.t_hot_off)


@dataclass(frozen=True)
class ConsumerParams:
    demand_profile: tuple[float, ...]
    sheddable: bool = False
    shed_cost: float = 0.0
    carrier: Carrier = E

    category = "consumer"

    def __post_init__(self):
        object.__setattr__(self, "demand_profile", _profile(self.demand_profile))

    def signature(self):
        return [self.carrier], []

    def check(self):
        if any(v < 0 for v in self.demand_profile):
            raise ValueError("demand must be non-negative")


@dataclass(frozen=True)
class ConverterParams:
    efficiency: float
    p_out_max: float
    p_out_min: float = 0.0
    must_run_binary: bool = False
    input_carrier: Carrier = G
    output_carrier: Carrier = H
    rate_cost: float = 0.0
    initial_power: Optional[float] = None

    category = "converter"

    def signature(self):
        return [self.input_carrier], [self.output_carrier]

    def check(self):
        if not self.efficiency > 0:
            raise ValueError("efficiency must be positive")
        if not 0 <= self.p_out_min <= self.p_out_max:
            raise ValueError("need 0 <= p_out_min <= p_out_max")


@dataclass(frozen=True)
class ResParams:
    generation_profile: tuple[float, ...]
    curtailable: bool = True
    curtail_cost: float = 0.0
    carrier: Carrier = E

    category = "res"

    def __post_init__(self):
        object.__setattr__(self, "generation_profile", _profile(self.generation_profile))

    def signature(self):
        return [], [self.carrier]

    def check(self):
        if any(v < 0 for v in self.generation_profile):
            raise ValueError("generation must be non-negative")


@dataclass(frozen=True)
class CogenParams:
    eta_elec: float
    eta_heat: float
    p_in_max: float
    p_in_min: float = 0.0
    rate_cost: float = 0.0
    initial_power: Optional[float] = None

    category = "cogen"

    def signature(self):
        return [G], [E, H]

    def check(self):
        if self.eta_elec < 0 or self.eta_heat < 0 or self.eta_elec + self.eta_heat > 1:
            raise ValueError("need eta_elec, eta_heat >= 0 and eta_elec + eta_heat <= 1")
        if not 0 <= self.p_in_min <= self.p_in_max:
            raise ValueError("need 0 <= p_in_min <= p_in_max")


@dataclass(frozen=True)
class EvParams:
    available: tuple[bool, ...]
    e_max: float
    p_char_max: float
    e_min: float = 0.0
    e_init: float = 0.0
    departure_targets: tuple[tuple[int, float], ...] = ()  # (step, kWh required at that step)
    trips: tuple[tuple[int, float], ...] = ()              # (step, kWh consumed on departure)
    p_disc_max: float = 0.0
    eta: float = 1.0
    control_mode: str = "continuous"  # or "onoff"
    plug: str = ""

    category = "ev"

    def __post_init__(self):
        object.__setattr__(self, "available", tuple(bool(a) for a in self.available))
        object.__setattr__(self, "departure_targets",
                           tuple((int(s), float(k)) for s, k in self.departure_targets))
        object.__setattr__(self, "trips", tuple((int(s), float(k)) for s, k in self.trips))

    def signature(self):
        return [E], [E]

    def check(self):
        if not 0 <= self.e_min <= self.e_init <= self.e_max:
            raise ValueError("need 0 <= e_min <= e_init <= e_max")
        if any(k > self.e_max for _, k in self.departure_targets):
            raise ValueError("departure target above e_max")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.control_mode not in ("continuous", "onoff"):
            raise ValueError(f"unknown control mode {self.control_mode!r}")
        if self.p_char_max < 0 or self.p_disc_max < 0:
            raise ValueError("power limits must be non-negative")


@dataclass(frozen=True)
class GeneratorParams:
    p_max: float
    p_min: float = 0.0
    fuel_cost: float = 0.0
    carrier: Carrier = H
    rate_cost: float = 0.0
    initial_power: Optional[float] = None

    category = "generator"

    def signature(self):
        return [], [self.carrier]

    def check(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError("need 0 <= p_min <= p_max")


@dataclass(frozen=True)
class GridTieParams:
    import_price_profile: tuple[float, ...]
    export_price_profile: tuple[float, ...] = field(default=())
    p_import_max: float = math.inf
    p_export_max: float = math.inf
    carrier: Carrier = E
    rate_cost: float = 0.0
    initial_power: Optional[float] = None
    slack: bool = True  # absorbs forecast errors of its carrier in closed loop

    category = "grid_tie"

    def __post_init__(self):
        imp = _profile(self.import_price_profile)
        exp = _profile(self.export_price_profile) or tuple(0.0 for _ in imp)
        object.__setattr__(self, "import_price_profile", imp)
        object.__setattr__(self, "export_price_profile", exp)

    def signature(self):
        return [self.carrier], [self.carrier]

    def check(self):
        if self.p_import_max < 0 or self.p_export_max < 0:
            raise ValueError("power limits must be non-negative")
        if len(self.import_price_profile) != len(self.export_price_profile):
            raise ValueError("import and export price profiles differ in length")


CATEGORIES = {
    "battery": BatteryParams,
    "thermal_storage": StorageParams,
    "p2g": P2gParams,
    "consumer": ConsumerParams,
    "converter": ConverterParams,
    "res": ResParams,
    "cogen": CogenParams,
    "ev": EvParams,
    "generator": GeneratorParams,
    "grid_tie": GridTieParams,
}

STORAGE_CATEGORIES = ("battery", "thermal_storage")
