"""Battery energy-storage dispatch toolkit: hindsight LP targets,
kernel-regression SoC reserve prediction, real-time peak shaving with
stacked arbitrage, and month-by-month billing backtests."""

__version__ = "0.1.0"

from .battery import BatteryParams, annual_cycles, soc_step
from .billing import BillingResult, TariffSchedule, billed_peak, total_cost
from .kernel import KernelConfig, build_training_set, knn_query, predict_peak_target, predict_soc_reserve
from .series import (
    DemandSeries,
    PriceSeries,
    Season,
    align,
    calendar_features,
    load_series,
    season_of,
    write_series,
)

__all__ = [
    "BatteryParams",
    "BillingResult",
    "DemandSeries",
    "KernelConfig",
    "PriceSeries",
    "Season",
    "TariffSchedule",
    "align",
    "annual_cycles",
    "billed_peak",
    "build_training_set",
    "calendar_features",
    "knn_query",
    "load_series",
    "predict_peak_target",
    "predict_soc_reserve",
    "season_of",
    "soc_step",
    "total_cost",
    "write_series",
]
