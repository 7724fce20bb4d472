"""Tiered sequential hyperparameter search for the kernel predictor.

Stages run in order - lookback window (coarse then fine), bandwidth
(log-scale then linear refinement), neighbor count (broad then refined) -
each keeping the other parameters at their incumbent values and adopting
a candidate only when it strictly improves validation cost savings, so
ties resolve to the smallest window, then bandwidth, then neighbor count.
Every evaluation lands in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .backtest import ScenarioConfig, run_sweep
from .kernel import KernelConfig
from .series import DemandSeries, PriceSeries


class SearchError(ValueError):
    """Bad search specification (empty grids, bad validation range)."""


@dataclass(frozen=True)
class SearchSpec:
    """Coarse grids per stage; fine grids are derived by bracketing the
    coarse optimum one cell to each side."""

    w_grid: tuple[int, ...] = ()  # steps; default derived from the step size
    sigma_grid: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    k_grid: tuple[int, ...] = (5, 10, 25, 50, 100)
    refine_points: int = 3
    validation_days: int | None = None  # trailing slice of training; None = half

    def resolved_w_grid(self, step_minutes: int) -> tuple[int, ...]:
        if self.w_grid:
            return self.w_grid
        return tuple(int(h * 60 / step_minutes) for h in (6, 12, 24, 48))


@dataclass(frozen=True)
class TraceEntry:
    stage: str
    config: KernelConfig
    savings: float
    cycles: float


def _bracket(grid: list[float], best: float, points: int, integer: bool) -> list[float]:
    """Fine candidates strictly between the coarse optimum's neighbor cells;
    an edge optimum refines only toward its inner neighbor."""
    grid = sorted(grid)
    if len(grid) < 2 or best not in grid:
        return []
    i = grid.index(best)
    lo = grid[i - 1] if i > 0 else best
    hi = grid[i + 1] if i + 1 < len(grid) else best
    cands = np.linspace(lo, hi, points + 2)[1:-1]
    if integer:
        cands = np.unique(np.maximum(1, np.round(cands).astype(int)))
    out = []
    for c in cands:
        v = int(c) if integer else float(c)
        if v not in grid and v != best:
            out.append(v)
    return out


def sequential_search(
    base: KernelConfig,
    stages: list[tuple[str, list, bool]],
    evaluate: Callable[[KernelConfig], tuple[float, float]],
    refine_points: int = 3,
) -> tuple[KernelConfig, list[TraceEntry]]:
    """Core tiered search over ``stages = [(field, coarse_grid, integer)]``.

    ``evaluate`` maps a config to (savings, cycles). Each stage picks its
    parameter from its own grids (ties keep the smallest value scanned
    first) while the other parameters stay at their incumbents; a final
    argmax over the whole trace guards against a later stage landing below
    an earlier evaluation.
    """
    trace: list[TraceEntry] = []
    cache: dict[KernelConfig, tuple[float, float]] = {}

    def run(stage: str, cfg: KernelConfig) -> tuple[float, float]:
        if cfg not in cache:
            cache[cfg] = evaluate(cfg)
            trace.append(TraceEntry(stage, cfg, cache[cfg][0], cache[cfg][1]))
        return cache[cfg]

    best_cfg = base
    for field, grid, integer in stages:
        if not grid:
            raise SearchError(f"empty grid for {field}")
        stage_sav = None
        stage_val = None
        for val in sorted(grid):
            cfg = replace(best_cfg, **{field: val})
            sav, _cyc = run(f"{field}-coarse", cfg)
            if stage_sav is None or sav > stage_sav:
                stage_sav, stage_val = sav, val
        for val in _bracket(list(grid), stage_val, refine_points, integer):
            cfg = replace(best_cfg, **{field: val})
            sav, _cyc = run(f"{field}-fine", cfg)
            if sav > stage_sav:
                stage_sav, stage_val = sav, val
        best_cfg = replace(best_cfg, **{field: stage_val})
    best_sav = run("final", best_cfg)[0]
    for entry in trace:
        if entry.savings > best_sav:
            best_sav, best_cfg = entry.savings, entry.config
    return best_cfg, trace


def split_validation(
    demand: DemandSeries, validation_days: int | None
) -> tuple[DemandSeries, DemandSeries]:
    """Trailing whole-month holdout of roughly the requested length."""
    from .series import month_slices

    slices = month_slices(demand)
    if len(slices) < 2:
        raise SearchError("training range must span at least two calendar months")
    if validation_days is None:
        n_months = max(1, len(slices) // 2)
    else:
        steps = validation_days * 24 * 60 // demand.step_minutes
        n_months = 0
        total = 0
        for _ym, sl in reversed(slices):
            total += sl.stop - sl.start
            n_months += 1
            if total >= steps:
                break
        n_months = min(n_months, len(slices) - 1)
    cut = slices[len(slices) - n_months][1].start
    return demand.slice(0, cut), demand.slice(cut, len(demand))


def tune(
    spec: SearchSpec,
    demand_train: DemandSeries,
    prices_train: PriceSeries,
    scenario: ScenarioConfig,
) -> tuple[KernelConfig, list[TraceEntry]]:
    """Tune (lookback, sigma, k) by validation cost savings.

    The trailing slice of the training range is held out for validation;
    model targets are re-solved on the remaining head for every window
    evaluation through the normal sweep path.
    """
    fit_demand, val_demand = split_validation(demand_train, spec.validation_days)
    if len(scenario.sizes_kw) != 1:
        raise SearchError("tuning expects a single battery size")

    def evaluate(cfg: KernelConfig) -> tuple[float, float]:
        report = run_sweep(
            fit_demand,
            prices_train,
            val_demand,
            prices_train,
            replace(scenario, kernel=cfg),
            jobs=1,
        )
        row = report.summary_rows()[0]
        return row["controller_savings"], row["controller_cycles"]

    stages = [
        ("lookback", list(spec.resolved_w_grid(demand_train.step_minutes)), True),
        ("sigma", list(spec.sigma_grid), False),
        ("k", list(spec.k_grid), True),
    ]
    return sequential_search(scenario.kernel, stages, evaluate, spec.refine_points)
