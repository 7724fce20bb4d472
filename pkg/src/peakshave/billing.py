"""Monthly demand-metric and total electricity-cost computation.

The billed peak follows the utility convention: average the two highest
*consecutive* 15-minute net-demand intervals of the month, i.e. the best
adjacent-pair (30-minute) window on the 15-minute interval grid. The
per-step maximum used inside the optimization model is recovered by a
tariff whose metric interval equals the series step with one interval
per window.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .battery import BatteryParams
from .schedule import DispatchSchedule
from .series import (
    DemandSeries,
    PriceSeries,
    Season,
    is_whole_months,
    month_slices,
    season_of,
)


class BillingError(ValueError):
    """Metric preconditions violated (resolution, slice length, alignment)."""


@dataclass(frozen=True)
class TariffSchedule:
    """Demand-charge rates ($/kW of billed monthly peak) plus fixed charges.

    Defaults are the Con Edison large-building standard rate: $42.80/kW in
    the June-September season, $33.50/kW otherwise, $71/month customer
    charge, demand metered as two consecutive 15-minute intervals.
    """

    kappa_summer: float = 42.80
    kappa_nonsummer: float = 33.50
    customer_charge: float = 71.0
    metric_interval_minutes: int = 15
    metric_consecutive_intervals: int = 2

    def __post_init__(self):
        if min(self.kappa_summer, self.kappa_nonsummer, self.customer_charge) < 0:
            raise BillingError("charges must be >= 0")
        if self.metric_interval_minutes <= 0 or self.metric_consecutive_intervals < 1:
            raise BillingError("bad demand-metric definition")

    def kappa_for(self, season: Season) -> float:
        return self.kappa_summer if season is Season.SUMMER else self.kappa_nonsummer

    def per_step_variant(self, step_minutes: int) -> "TariffSchedule":
        """Same rates with the demand metric collapsed to the per-step max."""
        return TariffSchedule(
            kappa_summer=self.kappa_summer,
            kappa_nonsummer=self.kappa_nonsummer,
            customer_charge=self.customer_charge,
            metric_interval_minutes=step_minutes,
            metric_consecutive_intervals=1,
        )


@dataclass(frozen=True)
class MonthBill:
    year: int
    month: int
    season: Season
    billed_peak_kw: float
    demand_charge: float
    energy_charge: float
    degradation_cost: float
    customer_charge: float

    @property
    def total(self) -> float:
        return (
            self.demand_charge
            + self.energy_charge
            + self.degradation_cost
            + self.customer_charge
        )


@dataclass(frozen=True)
class BillingResult:
    months: tuple[MonthBill, ...]

    @property
    def total(self) -> float:
        return sum(m.total for m in self.months)

    @property
    def total_demand_charge(self) -> float:
        return sum(m.demand_charge for m in self.months)

    @property
    def total_energy_charge(self) -> float:
        return sum(m.energy_charge for m in self.months)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "months": [
                {
                    "year": m.year,
                    "month": m.month,
                    "season": m.season.value,
                    "billed_peak_kw": m.billed_peak_kw,
                    "demand_charge": m.demand_charge,
                    "energy_charge": m.energy_charge,
                    "degradation_cost": m.degradation_cost,
                    "customer_charge": m.customer_charge,
                    "total": m.total,
                }
                for m in self.months
            ],
        }


def interval_averages(values: np.ndarray, step_minutes: int, interval_minutes: int) -> np.ndarray:
    """Average the signal over consecutive clock-aligned metering intervals."""
    if interval_minutes % step_minutes != 0:
        raise BillingError(
            f"metric interval {interval_minutes} min is not a multiple of the "
            f"{step_minutes}-minute series step"
        )
    r = interval_minutes // step_minutes
    if values.size % r != 0:
        raise BillingError(
            f"slice of {values.size} steps is not a whole number of "
            f"{interval_minutes}-minute intervals"
        )
    return values.reshape(-1, r).mean(axis=1)


def billed_peak(net_demand: DemandSeries, tariff: TariffSchedule) -> float:
    """Billed monthly peak (kW) of a one-month net-demand slice.

    Maximum over adjacent groups of ``metric_consecutive_intervals``
    interval averages of their mean; with the 2 x 15-minute default this is
    the best 30-minute window on the 15-minute grid.
    """
    avgs = interval_averages(
        net_demand.values, net_demand.step_minutes, tariff.metric_interval_minutes
    )
    c = tariff.metric_consecutive_intervals
    if avgs.size < c:
        raise BillingError(
            f"slice has {avgs.size} metering interval(s); metric needs {c} consecutive"
        )
    if c == 1:
        return float(avgs.max())
    windows = np.convolve(avgs, np.full(c, 1.0 / c), mode="valid")
    return float(windows.max())


def total_cost(
    net_demand: DemandSeries,
    discharge: DispatchSchedule | np.ndarray | None,
    prices: PriceSeries,
    tariff: TariffSchedule,
    params: BatteryParams | None = None,
) -> BillingResult:
    """Bill a net-demand trajectory month by month.

    Per month: kappa(season) * billed peak + sum of lambda_t * net_t * dt
    + sum of c_deg * d_t * dt + the customer charge. Negative net demand
    (export) credits at the real-time price. Requires whole calendar months
    and a price series already on the demand grid.
    """
    if len(prices) != len(net_demand) or prices.start != net_demand.start:
        raise BillingError("prices are not aligned with the net-demand series")
    if not is_whole_months(net_demand):
        raise BillingError(
            f"billing requires whole calendar months; series covers "
            f"[{net_demand.start}, {net_demand.end})"
        )
    if discharge is None:
        d = np.zeros(len(net_demand))
    elif isinstance(discharge, DispatchSchedule):
        d = discharge.d
    else:
        d = np.asarray(discharge, dtype=np.float64)
    if d.shape != (len(net_demand),):
        raise BillingError("discharge length does not match the net-demand series")

    c_deg = params.c_deg if params is not None else 0.0
    dt = net_demand.dt_hours
    bills = []
    for (year, month), sl in month_slices(net_demand):
        month_net = net_demand.slice(sl.start, sl.stop)
        season = season_of(datetime(year, month, 1))
        peak = billed_peak(month_net, tariff)
        energy = float(np.dot(prices.values[sl], net_demand.values[sl]) * dt)
        degradation = float(c_deg * d[sl].sum() * dt)
        bills.append(
            MonthBill(
                year=year,
                month=month,
                season=season,
                billed_peak_kw=peak,
                demand_charge=tariff.kappa_for(season) * peak,
                energy_charge=energy,
                degradation_cost=degradation,
                customer_charge=tariff.customer_charge,
            )
        )
    return BillingResult(months=tuple(bills))
