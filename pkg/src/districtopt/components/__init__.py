"""Component parameter records and MIL fragment builders."""
from .builders import (BUILDERS, COST_CATEGORIES, ModelFragment, build, build_battery,
                       build_cogen, build_consumer, build_converter, build_ev, build_generator,
                       build_grid_tie, build_p2g, build_res, build_storage_thermal)
from .params import (CATEGORIES, STORAGE_CATEGORIES, BatteryParams, CogenParams,
                     ConsumerParams, ConverterParams, EvParams, GeneratorParams, GridTieParams,
                     P2gParams, ResParams, StorageParams)

__all__ = [
    "BUILDERS", "COST_CATEGORIES", "ModelFragment", "build", "build_battery", "build_cogen",
    "build_consumer", "build_converter", "build_ev", "build_generator", "build_grid_tie",
    "build_p2g", "build_res", "build_storage_thermal", "CATEGORIES", "STORAGE_CATEGORIES",
    "BatteryParams", "CogenParams", "ConsumerParams", "ConverterParams", "EvParams",
    "GeneratorParams", "GridTieParams", "P2gParams", "ResParams", "StorageParams",
]
