"""Two-stage real-time control: peak shaving first, arbitrage in the rest.

Each step runs with only observed information: current demand, the
alpha-confidence SoC reserve and peak-target predictions from the kernel
model, and the arbitrage policy's bids. Stage 1 discharges when demand
exceeds the running peak target (also burning off any SoC surplus above
the reserve, mirroring the max(-delta_e*eta, D - p) rule) and recharges
toward the reserve when there is headroom under the target. Stage 2 folds
the arbitrage bids into whatever power and energy room stage 1 left,
never raising net demand above the updated target and never undoing the
stage-1 shave. The running peak target resets at billing-month starts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .arbitrage import ArbitragePolicy, Headroom, NullPolicy, ValueTablePolicy
from .battery import SOC_TOL_KWH, BatteryParams, soc_step
from .kernel import KernelConfig, TrainingSet, predict_batch
from .schedule import DispatchSchedule
from .series import DemandSeries, PriceSeries, calendar_features, month_slices


class ControlError(RuntimeError):
    """A controller invariant failed (bounds, exclusivity, peak monotone)."""


@dataclass
class ControllerState:
    e: float
    p_running: float = 0.0
    month: tuple[int, int] | None = None


@dataclass(frozen=True)
class StepDecision:
    d: float
    q: float
    e_next: float
    d_ps: float
    q_ps: float
    net: float
    p_next: float  # running peak target after this step


def control_step(
    state: ControllerState,
    demand_kw: float,
    e_hat: float,
    p_pred: float,
    arb_bids: tuple[float, float],
    params: BatteryParams,
    dt_hours: float,
) -> StepDecision:
    """One control step; pure in (state, inputs), state is not mutated."""
    e = state.e
    q_arb, d_arb = float(arb_bids[0]), float(arb_bids[1])
    eta = params.eta

    delta_e = e_hat - e
    p_t = max(state.p_running, p_pred)
    d_ps = 0.0
    q_ps = 0.0
    if demand_kw > p_t:
        d_ps = min(
            max(-delta_e * eta / dt_hours, demand_kw - p_t),
            params.p_max,
            (e - params.e_min) * eta / dt_hours,
        )
    elif e < e_hat and demand_kw < p_t:
        q_ps = min(
            delta_e / (eta * dt_hours),
            p_t - demand_kw,
            params.p_max,
            (params.e_max - e) / (eta * dt_hours),
        )
    e_ps = e - (d_ps * dt_hours) / eta + eta * (q_ps * dt_hours)
    net_ps = demand_kw - d_ps + q_ps
    p_next = max(p_t, net_ps)

    q_cap = min(p_next - demand_kw, min(params.p_max, (params.e_max - e) / (eta * dt_hours)))
    d_cap = min((e - e_ps) * eta / dt_hours, params.p_max)
    if q_ps > 0.0:
        q = min(q_arb + q_ps, q_cap)
        d = 0.0
    elif d_ps > 0.0:
        d = min(d_arb + d_ps, max(d_cap, d_ps))
        q = 0.0
    else:
        q = max(min(q_arb, q_cap), 0.0)
        d = max(min(d_arb, d_cap), 0.0)

    e_next = soc_step(e, d, q, dt_hours, params)
    net = demand_kw - d + q
    return StepDecision(
        d=d, q=q, e_next=e_next, d_ps=d_ps, q_ps=q_ps, net=net, p_next=max(p_next, net)
    )


# ---------------------------------------------------------------------------
# Horizon drivers
# ---------------------------------------------------------------------------


def assemble_query_features(
    demand: DemandSeries, history_tail: np.ndarray, lookback: int
) -> np.ndarray:
    """Trailing W-window feature per step over [history_tail | demand].

    Steps too early for a full trailing window fall back to the earliest
    full window of the concatenation.
    """
    concat = np.concatenate([history_tail, demand.values])
    if concat.size < lookback:
        raise ControlError(
            f"need at least lookback={lookback} demand samples including history, "
            f"got {concat.size}"
        )
    cal = calendar_features(demand)
    offset = history_tail.size
    endpoints = np.arange(len(demand)) + offset
    endpoints = np.maximum(endpoints, lookback - 1)
    w = lookback
    windows = np.lib.stride_tricks.sliding_window_view(concat, w)
    feats = np.empty((len(demand), w + 2))
    feats[:, :w] = windows[endpoints - (w - 1)]
    feats[:, w] = cal.t_sin
    feats[:, w + 1] = cal.t_cos
    return feats


def predictions_for(
    demand: DemandSeries, training: TrainingSet, config: KernelConfig
):
    """Batch (e_hat, p_pred) for every step of a demand series, using the
    training set's trailing demand for the early windows when the series
    continues the training history."""
    if demand.start == training.history_end and demand.step_minutes == training.step_minutes:
        tail = training.history_tail
    else:
        tail = np.empty(0)
    feats = assemble_query_features(demand, tail, training.lookback)
    summer = demand.season_mask()
    e_hat, p_pred, info = predict_batch(feats, summer, training, config)
    return e_hat, p_pred, feats, summer, info


def month_start_flags(demand: DemandSeries) -> np.ndarray:
    flags = np.zeros(len(demand), dtype=bool)
    for _ym, sl in month_slices(demand):
        flags[sl.start] = True
    return flags


def run_controller(
    demand: DemandSeries,
    prices: PriceSeries,
    e_hat: np.ndarray,
    p_pred: np.ndarray,
    params: BatteryParams,
    policy: ArbitragePolicy | None = None,
    e_start: float | None = None,
    validate: bool = True,
) -> DispatchSchedule:
    """Run the control loop over a horizon with precomputed predictions.

    A :class:`ValueTablePolicy` (or None) runs through the compiled fast
    path; any other policy object is driven step by step through
    :func:`control_step`.
    """
    if len(prices) != len(demand) or prices.start != demand.start:
        raise ControlError("prices must be aligned with demand")
    dt = demand.dt_hours
    e0 = params.e0 if e_start is None else e_start
    flags = month_start_flags(demand)

    if policy is None or isinstance(policy, (ValueTablePolicy, NullPolicy)):
        if isinstance(policy, ValueTablePolicy):
            table_x, table_v = policy.soc_points, policy.v
            use_table = True
        else:
            table_x = table_v = np.zeros(1)
            use_table = False
        d, q, e, net, p_run, d_ps, q_ps = kernels.controller_loop(
            demand.values,
            e_hat,
            p_pred,
            flags,
            prices.values,
            table_x,
            table_v,
            use_table,
            params.p_max,
            params.e_max,
            params.e_min,
            params.eta,
            params.c_deg,
            dt,
            e0,
        )
    else:
        n = len(demand)
        d = np.empty(n)
        q = np.empty(n)
        e = np.empty(n)
        net = np.empty(n)
        p_run = np.empty(n)
        d_ps = np.empty(n)
        q_ps = np.empty(n)
        state = ControllerState(e=e0, p_running=0.0)
        par = params if e_start is None else replace(params, e0=e_start)
        for t in range(n):
            if flags[t]:
                state.p_running = 0.0
            cap_q = min(par.p_max, (par.e_max - state.e) / (par.eta * dt))
            cap_d = min(par.p_max, (state.e - par.e_min) * par.eta / dt)
            bids = policy.step(
                float(prices.values[t]), state.e, Headroom(cap_q, cap_d), par
            )
            dec = control_step(state, float(demand.values[t]), float(e_hat[t]),
                               float(p_pred[t]), bids, par, dt)
            d[t], q[t], e[t] = dec.d, dec.q, dec.e_next
            net[t], p_run[t] = dec.net, dec.p_next
            d_ps[t], q_ps[t] = dec.d_ps, dec.q_ps
            state.e = dec.e_next
            state.p_running = dec.p_next

    sched = DispatchSchedule(
        start=demand.start,
        step_minutes=demand.step_minutes,
        demand=demand.values.copy(),
        d=d,
        q=q,
        e=e,
        net=net,
        p_running=p_run,
        d_ps=d_ps,
        q_ps=q_ps,
    )
    if validate:
        validate_schedule(sched, params, flags)
    return sched


def validate_schedule(
    sched: DispatchSchedule, params: BatteryParams, month_flags: np.ndarray
) -> None:
    """Assert the controller invariants; raises rather than clamping."""
    tol = SOC_TOL_KWH
    if np.any(sched.d < -tol) or np.any(sched.d > params.p_max + tol):
        raise ControlError("discharge power out of [0, p_max]")
    if np.any(sched.q < -tol) or np.any(sched.q > params.p_max + tol):
        raise ControlError("charge power out of [0, p_max]")
    if np.any(sched.d * sched.q > tol):
        raise ControlError("simultaneous charge and discharge")
    if np.any(sched.e < params.e_min - tol) or np.any(sched.e > params.e_max + tol):
        raise ControlError("SoC out of bounds")
    if np.any(sched.net > sched.p_running + 1e-9):
        raise ControlError("net demand above the running peak target")
    p = sched.p_running
    drops = (p[1:] < p[:-1] - 1e-12) & ~month_flags[1:]
    if np.any(drops):
        raise ControlError("running peak target decreased inside a month")


def run_backmonth(
    demand_month: DemandSeries,
    prices_month: PriceSeries,
    training: TrainingSet,
    config: KernelConfig,
    params: BatteryParams,
    policy: ArbitragePolicy | None = None,
    e_start: float | None = None,
) -> DispatchSchedule:
    """Predict and control one billing month; the running peak target
    starts fresh and is seeded by the first step's peak prediction."""
    e_hat, p_pred, _feats, _summer, _info = predictions_for(demand_month, training, config)
    return run_controller(
        demand_month, prices_month, e_hat, p_pred, params, policy, e_start
    )
