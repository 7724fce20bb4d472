"""End-to-end experiment orchestration and metrics.

A scenario compares three trajectories over whole-month test ranges:
no storage, the per-month perfect-foresight LP benchmark (optionally
cycle-capped), and the kernel-regression controller trained on a disjoint
history. Sweeps over battery sizes share everything that does not depend
on the battery: the neighbor search runs once and is re-targeted per
size, and the per-size LP solves fan out across processes.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime

from .arbitrage import train_value_table
from .battery import BatteryParams, annual_cycles
from .billing import BillingResult, TariffSchedule, total_cost
from .controller import predictions_for, run_controller
from .hindsight import (
    HindsightTargets,
    solve_hindsight_benchmark,
    solve_targets_by_month,
)
from .kernel import (
    KernelConfig,
    SeasonPool,
    TrainingSet,
    build_training_set,
    retarget_predictions,
)
from .schedule import DispatchSchedule
from .series import (
    DemandSeries,
    PriceSeries,
    align,
    is_whole_months,
    month_slices,
    season_of,
)


class ScenarioError(ValueError):
    """Scenario inputs are inconsistent (ranges, alignment, pool sizes)."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Battery sweep plus kernel/tariff settings and the train/test split."""

    sizes_kw: tuple[float, ...]
    kernel: KernelConfig
    tariff: TariffSchedule
    duration_hours: float = 2.2
    e_min_frac: float = 0.2
    e0_frac: float = 0.5
    eta: float = 0.9
    c_deg: float = 0.0
    cycle_limit_per_day: float | None = 1.0
    soc_bins: int = 100

    def params_for(self, size_kw: float) -> BatteryParams:
        return BatteryParams.from_config(
            p_max_kw=size_kw,
            duration_hours=self.duration_hours,
            e_min_frac=self.e_min_frac,
            e0_frac=self.e0_frac,
            eta=self.eta,
            c_deg=self.c_deg,
            cycle_limit_per_day=self.cycle_limit_per_day,
        )


@dataclass(frozen=True)
class SizeResult:
    size_kw: float
    controller_bill: BillingResult
    hindsight_bill: BillingResult
    controller_cycles: float
    hindsight_cycles: float
    controller_schedule: DispatchSchedule
    hindsight_schedule: DispatchSchedule

    def savings(self, no_storage_total: float) -> dict:
        ctrl = no_storage_total - self.controller_bill.total
        hind = no_storage_total - self.hindsight_bill.total
        return {
            "size_kw": self.size_kw,
            "controller_cost": self.controller_bill.total,
            "hindsight_cost": self.hindsight_bill.total,
            "controller_savings": ctrl,
            "hindsight_savings": hind,
            "controller_savings_pct": 100.0 * ctrl / no_storage_total,
            "hindsight_savings_pct": 100.0 * hind / no_storage_total,
            "capture_ratio": ctrl / hind if hind != 0 else float("nan"),
            "controller_cycles": self.controller_cycles,
            "hindsight_cycles": self.hindsight_cycles,
        }


@dataclass(frozen=True)
class BacktestReport:
    no_storage_bill: BillingResult
    results: tuple[SizeResult, ...]

    def to_dict(self) -> dict:
        no_total = self.no_storage_bill.total
        return {
            "no_storage_cost": no_total,
            "no_storage_months": self.no_storage_bill.to_dict()["months"],
            "scenarios": [
                {
                    **r.savings(no_total),
                    "monthly_billed_peaks": {
                        "no_storage": [m.billed_peak_kw for m in self.no_storage_bill.months],
                        "hindsight": [m.billed_peak_kw for m in r.hindsight_bill.months],
                        "controller": [m.billed_peak_kw for m in r.controller_bill.months],
                    },
                }
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_rows(self) -> list[dict]:
        no_total = self.no_storage_bill.total
        return [r.savings(no_total) for r in self.results]

    def summary_csv(self) -> str:
        rows = self.summary_rows()
        cols = list(rows[0].keys())
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join(repr(float(row[c])) for c in cols))
        return "\n".join(lines) + "\n"


def _check_ranges(demand_train, demand_test):
    if not is_whole_months(demand_train):
        raise ScenarioError("training demand must cover whole calendar months")
    if not is_whole_months(demand_test):
        raise ScenarioError("test demand must cover whole calendar months")
    overlap = min(demand_train.end, demand_test.end) > max(
        demand_train.start, demand_test.start
    )
    if overlap:
        raise ScenarioError("test range must be disjoint from the training range")


def _retarget_training_set(tset: TrainingSet, targets: HindsightTargets) -> TrainingSet:
    """Same features/endpoints, targets re-gathered from another LP run."""
    pools = {}
    for season, pool in tset.pools.items():
        pools[season] = SeasonPool(
            features=pool.features,
            target_e=targets.e_hist[pool.endpoints],
            target_p=targets.p_hist[pool.endpoints + 1],
            endpoints=pool.endpoints,
        )
    return TrainingSet(
        lookback=tset.lookback,
        step_minutes=tset.step_minutes,
        pools=pools,
        history_tail=tset.history_tail,
        history_end=tset.history_end,
    )


def _lp_work(args):
    """Per-size LP bundle (runs in a worker process for sweeps)."""
    demand_train, demand_test, prices_test, params, kappas = args
    targets = solve_targets_by_month(demand_train, params)
    hindsight = solve_hindsight_benchmark(demand_test, prices_test, params, kappas)
    return targets, hindsight


def run_sweep(
    demand_train: DemandSeries,
    prices_train: PriceSeries,
    demand_test: DemandSeries,
    prices_test: PriceSeries,
    config: ScenarioConfig,
    jobs: int = 1,
) -> BacktestReport:
    """Backtest every battery size in the sweep; the kernel neighbor search
    runs once and is re-targeted per size."""
    demand_train, prices_train_a = align(demand_train, prices_train)
    demand_test, prices_test_a = align(demand_test, prices_test)
    _check_ranges(demand_train, demand_test)

    tariff = config.tariff
    kappas = [
        tariff.kappa_for(season_of(datetime(y, m, 1)))
        for (y, m), _sl in month_slices(demand_test)
    ]
    no_storage_bill = total_cost(
        demand_test.with_values(demand_test.values, is_net=True),
        None,
        prices_test_a,
        tariff,
    )

    lp_args = [
        (demand_train, demand_test, prices_test_a, config.params_for(s), kappas)
        for s in config.sizes_kw
    ]
    if jobs > 1 and len(lp_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lp_out = list(pool.map(_lp_work, lp_args))
    else:
        lp_out = [_lp_work(a) for a in lp_args]

    base_tset = None
    shared = None
    results = []
    for size_kw, (targets, hindsight_sched) in zip(config.sizes_kw, lp_out):
        params = config.params_for(size_kw)
        if base_tset is None:
            base_tset = build_training_set(demand_train, targets, config.kernel.lookback)
            tset = _retarget_training_set(base_tset, targets)
            e_hat, p_pred, feats, summer, info = predictions_for(
                demand_test, tset, config.kernel
            )
            shared = (summer, info)
        else:
            tset = _retarget_training_set(base_tset, targets)
            summer, info = shared
            e_hat, p_pred = retarget_predictions(info, summer, tset, config.kernel)

        policy = train_value_table(prices_train, params, config.soc_bins)
        ctrl_sched = run_controller(
            demand_test, prices_test_a, e_hat, p_pred, params, policy
        )
        ctrl_bill = total_cost(
            demand_test.with_values(ctrl_sched.net), ctrl_sched, prices_test_a, tariff, params
        )
        hind_bill = total_cost(
            demand_test.with_values(hindsight_sched.net),
            hindsight_sched,
            prices_test_a,
            tariff,
            params,
        )
        results.append(
            SizeResult(
                size_kw=size_kw,
                controller_bill=ctrl_bill,
                hindsight_bill=hind_bill,
                controller_cycles=annual_cycles(ctrl_sched, params),
                hindsight_cycles=annual_cycles(hindsight_sched, params),
                controller_schedule=ctrl_sched,
                hindsight_schedule=hindsight_sched,
            )
        )
    return BacktestReport(no_storage_bill=no_storage_bill, results=tuple(results))


def run_scenario(
    demand_train: DemandSeries,
    prices_train: PriceSeries,
    demand_test: DemandSeries,
    prices_test: PriceSeries,
    config: ScenarioConfig,
) -> BacktestReport:
    """Single end-to-end scenario (every size in config, sequentially)."""
    return run_sweep(demand_train, prices_train, demand_test, prices_test, config, jobs=1)
