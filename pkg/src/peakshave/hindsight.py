"""Hindsight linear programs and training-target extraction.

Three LP variants over a horizon of T steps with decision variables
d_t, q_t (kW), e_t (kWh, end-of-step), and a peak variable p (kW):

* combined: minimize sum[(c*d_t + lambda_t*(D_t - d_t + q_t)) * dt] + kappa*p
* peak shaving: minimize p + delta * sum(e_t), delta a small tie-breaker
  that keeps the SoC trajectory at the minimum reserve achieving p*
* arbitrage stage 2: minimize sum[(c*d_t - lambda_t*(d_t - q_t)) * dt]
  holding net demand under the stage-1 peak and SoC at or above the
  stage-1 reserve trajectory

All variants share the SoC dynamics e_t = e_{t-1} - d_t*dt/eta + eta*q_t*dt
(with e_0 the given initial SoC and the terminal SoC left free), power
bounds [0, p_max], and SoC bounds [e_min, e_max]. Solved with HiGHS via
scipy; any solver meeting 1e-6 feasibility/optimality would do.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .battery import BatteryParams
from .schedule import DispatchSchedule
from .series import DemandSeries, PriceSeries, month_slices

#: default feasibility/consistency tolerance for accepted solutions
LP_TOL = 1e-6

#: HiGHS tolerances tightened to their floor: the combined objective mixes
#: kappa*p (huge) with per-step energy costs (tiny), and default tolerances
#: leave the small coefficients unresolved
_HIGHS_OPTIONS = {
    "dual_feasibility_tolerance": 1e-10,
    "primal_feasibility_tolerance": 1e-10,
}


class Variant(Enum):
    COMBINED = "combined"
    PEAK_SHAVING = "peak_shaving"
    ARBITRAGE_STAGE2 = "arbitrage_stage2"


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    """The LP backend failed or returned an out-of-tolerance solution."""


class InfeasibleError(SolverError):
    """The problem instance has no feasible dispatch."""


def default_delta(params: BatteryParams, horizon: int) -> float:
    """Tie-break weight keeping delta * sum(e) well under 1 kW of peak."""
    return 1e-6 / (params.e_max * horizon)


@dataclass(frozen=True)
class LpProblem:
    """One dispatch LP instance. ``prices`` may be None for peak shaving;
    stage 2 requires ``p_star`` and ``e_star`` from a stage-1 solution.

    ``tie_break`` selects how the peak-shaving SoC tie-break is realized:
    "lexicographic" (default) minimizes p first, then sum(e) with the peak
    held at p* - the exact small-delta limit of the mixed objective
    p + delta*sum(e), and the only numerically sound form (a delta small
    enough to keep the tie-break under 1 kW of peak is ~1e-11 per kWh,
    below any LP solver's dual tolerance). "delta" solves the literal
    mixed objective with the stored delta, for sensitivity sweeps.
    """

    variant: Variant
    demand: np.ndarray
    dt_hours: float
    params: BatteryParams
    prices: np.ndarray | None = None
    kappa: float = 0.0
    delta: float | None = None
    tie_break: str = "lexicographic"
    cycle_cap_kwh: float | None = None
    p_star: float | None = None
    e_star: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.demand, dtype=np.float64)
        object.__setattr__(self, "demand", d)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("demand must be a non-empty 1-D array")
        if self.variant is not Variant.PEAK_SHAVING:
            if self.prices is None:
                raise ValueError(f"{self.variant.value} requires prices")
            p = np.asarray(self.prices, dtype=np.float64)
            if p.shape != d.shape:
                raise ValueError("prices must match the demand horizon")
            object.__setattr__(self, "prices", p)
        if self.variant is Variant.PEAK_SHAVING:
            delta = self.delta if self.delta is not None else default_delta(self.params, d.size)
            if delta <= 0:
                raise ValueError("peak-shaving tie-break delta must be > 0")
            object.__setattr__(self, "delta", delta)
        if self.variant is Variant.ARBITRAGE_STAGE2:
            if self.p_star is None or self.e_star is None:
                raise ValueError("stage 2 requires (p_star, e_star) from stage 1")
            e = np.asarray(self.e_star, dtype=np.float64)
            if e.shape != d.shape:
                raise ValueError("e_star must match the demand horizon")
            object.__setattr__(self, "e_star", e)

    @property
    def horizon(self) -> int:
        return self.demand.size


@dataclass(frozen=True)
class LpSolution:
    status: Status
    p_star: float = float("nan")
    d: np.ndarray | None = None
    q: np.ndarray | None = None
    e: np.ndarray | None = None
    objective: float = float("nan")
    solve_seconds: float = field(default=0.0, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def net(self, demand: np.ndarray) -> np.ndarray:
        return demand - self.d + self.q


def _assemble(problem: LpProblem, with_cap: bool = True):
    """Shared constraint matrices over variables x = [d, q, e, p]."""
    T = problem.horizon
    par = problem.params
    dt = problem.dt_hours
    n = 3 * T + 1

    # SoC dynamics: e_t - e_{t-1} + d_t*dt/eta - eta*dt*q_t = [e0 at t=0]
    rows = np.repeat(np.arange(T), 3)
    cols = np.empty(3 * T, dtype=np.int64)
    vals = np.empty(3 * T)
    cols[0::3] = 2 * T + np.arange(T)
    vals[0::3] = 1.0
    cols[1::3] = np.arange(T)
    vals[1::3] = dt / par.eta
    cols[2::3] = T + np.arange(T)
    vals[2::3] = -par.eta * dt
    prev = sp.coo_matrix(
        (-np.ones(T - 1), (np.arange(1, T), 2 * T + np.arange(T - 1))), shape=(T, n)
    )
    a_eq = (sp.coo_matrix((vals, (rows, cols)), shape=(T, n)) + prev).tocsr()
    b_eq = np.zeros(T)
    b_eq[0] = par.e0

    # peak cover: -d_t + q_t - p <= -D_t
    rows = np.repeat(np.arange(T), 3)
    cols = np.concatenate([np.arange(T), T + np.arange(T), np.full(T, 3 * T)]).reshape(
        3, T
    ).T.ravel()
    vals = np.tile(np.array([-1.0, 1.0, -1.0]), T)
    ub_blocks = [sp.coo_matrix((vals, (rows, cols)), shape=(T, n))]
    b_blocks = [-problem.demand]
    if with_cap and problem.cycle_cap_kwh is not None:
        row = sp.coo_matrix((np.full(T, dt), (np.zeros(T), np.arange(T))), shape=(1, n))
        ub_blocks.append(row)
        b_blocks.append(np.array([problem.cycle_cap_kwh]))
    a_ub = sp.vstack(ub_blocks).tocsr()
    b_ub = np.concatenate(b_blocks)

    e_lb = np.full(T, par.e_min)
    if problem.variant is Variant.ARBITRAGE_STAGE2:
        # stage-1 floats are feasible only to solver precision; a hair of
        # slack (well under the 1e-6 solution tolerance) keeps the stage-1
        # dispatch strictly inside the stage-2 feasible set
        slack = 1e-9 + 1e-11 * par.e_max
        e_lb = np.maximum(e_lb, problem.e_star - slack)
    return a_eq, b_eq, a_ub, b_ub, e_lb


def _run_linprog(problem, c, mats, p_bounds):
    T = problem.horizon
    par = problem.params
    a_eq, b_eq, a_ub, b_ub, e_lb = mats
    bounds = (
        [(0.0, par.p_max)] * (2 * T)
        + list(zip(e_lb, np.full(T, par.e_max)))
        + [p_bounds]
    )
    t0 = time.perf_counter()
    res = None
    # presolve occasionally leaves HiGHS unable to certify optimality on
    # the kappa-dominated objectives; retry without it before giving up
    for options in (_HIGHS_OPTIONS, {**_HIGHS_OPTIONS, "presolve": False}):
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options=options,
        )
        if res.status in (0, 2, 3):
            break
    elapsed = time.perf_counter() - t0
    if res.status == 2:
        return None, Status.INFEASIBLE, elapsed
    if res.status == 3:
        return None, Status.UNBOUNDED, elapsed
    if res.status != 0:
        raise SolverError(f"LP backend failed: {res.message}")
    return res, Status.OPTIMAL, elapsed


def _solve(problem: LpProblem) -> LpSolution:
    T = problem.horizon
    par = problem.params
    dt = problem.dt_hours
    n = 3 * T + 1  # [d, q, e, p]
    # the dense cycle-cap row slows HiGHS several-fold; solve the relaxation
    # first, since a relaxed optimum inside the cap is optimal for the
    # capped problem too
    defer_cap = problem.variant is Variant.COMBINED and problem.cycle_cap_kwh is not None
    mats = _assemble(problem, with_cap=not defer_cap)
    elapsed = 0.0

    if problem.variant is Variant.PEAK_SHAVING and problem.tie_break == "lexicographic":
        # phase 1: minimum peak
        c = np.zeros(n)
        c[-1] = 1.0
        res, status, t1 = _run_linprog(problem, c, mats, (0.0, None))
        elapsed += t1
        if status is not Status.OPTIMAL:
            return LpSolution(status=status, solve_seconds=elapsed)
        p0 = float(res.x[-1])
        # phase 2: minimum total SoC among peak-optimal dispatches; the
        # hair of slack absorbs solver round-off in p0 and stays orders of
        # magnitude below the 1e-6 solution tolerance
        c = np.zeros(n)
        c[2 * T : 3 * T] = 1.0
        res = None
        for p_slack in (1e-9 + 1e-11 * abs(p0), 1e-7):
            res, status, t2 = _run_linprog(problem, c, mats, (0.0, p0 + p_slack))
            elapsed += t2
            if status is Status.OPTIMAL:
                break
        if status is not Status.OPTIMAL:
            raise SolverError("tie-break phase infeasible at the phase-1 peak")
        x = res.x
        d, q, e = x[:T], x[T : 2 * T], x[2 * T : 3 * T]
        objective = p0 + problem.delta * float(e.sum())
        sol = LpSolution(
            status=Status.OPTIMAL,
            p_star=p0,
            d=d,
            q=q,
            e=e,
            objective=objective,
            solve_seconds=elapsed,
        )
    else:
        c = np.zeros(n)
        if problem.variant is Variant.COMBINED:
            c[:T] = (par.c_deg - problem.prices) * dt
            c[T : 2 * T] = problem.prices * dt
            c[-1] = problem.kappa
        elif problem.variant is Variant.PEAK_SHAVING:
            c[2 * T : 3 * T] = problem.delta
            c[-1] = 1.0
        else:
            c[:T] = (par.c_deg - problem.prices) * dt
            c[T : 2 * T] = problem.prices * dt
        if problem.variant is Variant.ARBITRAGE_STAGE2:
            p_bounds = (0.0, problem.p_star + 1e-9 + 1e-11 * abs(problem.p_star))
        else:
            p_bounds = (0.0, None)
        res, status, elapsed = _run_linprog(problem, c, mats, p_bounds)
        if status is Status.OPTIMAL and defer_cap:
            discharged = float(res.x[:T].sum()) * dt
            if discharged > problem.cycle_cap_kwh * (1.0 + 1e-9) + 1e-9:
                mats = _assemble(problem, with_cap=True)
                res, status, t2 = _run_linprog(problem, c, mats, p_bounds)
                elapsed += t2
        if status is not Status.OPTIMAL:
            return LpSolution(status=status, solve_seconds=elapsed)
        x = res.x
        d, q, e, p = x[:T], x[T : 2 * T], x[2 * T : 3 * T], float(x[-1])
        if problem.variant is Variant.COMBINED:
            objective = float(res.fun + np.dot(problem.prices, problem.demand) * dt)
        else:
            objective = float(res.fun)
        if problem.variant is Variant.ARBITRAGE_STAGE2:
            p = problem.p_star  # the solver's free p has no meaning of its own
        sol = LpSolution(
            status=Status.OPTIMAL,
            p_star=p,
            d=d,
            q=q,
            e=e,
            objective=objective,
            solve_seconds=elapsed,
        )
    worst = max_constraint_violation(problem, sol)
    if worst > LP_TOL:
        raise SolverError(f"solution violates constraints by {worst:.2e} (> {LP_TOL})")
    return sol


def max_constraint_violation(problem: LpProblem, sol: LpSolution) -> float:
    """Largest violation across dynamics, bounds, peak cover, and the
    optional cycle cap; 0 for a perfectly feasible solution."""
    par = problem.params
    dt = problem.dt_hours
    d, q, e = sol.d, sol.q, sol.e
    e_prev = np.concatenate([[par.e0], e[:-1]])
    dyn = np.abs(e - (e_prev - d * dt / par.eta + par.eta * q * dt))
    worst = float(dyn.max())
    worst = max(worst, float((-d).max()), float((d - par.p_max).max()))
    worst = max(worst, float((-q).max()), float((q - par.p_max).max()))
    worst = max(worst, float((par.e_min - e).max()), float((e - par.e_max).max()))
    net = problem.demand - d + q
    p_ref = problem.p_star if problem.variant is Variant.ARBITRAGE_STAGE2 else sol.p_star
    worst = max(worst, float((net - p_ref).max()))
    if problem.variant is Variant.ARBITRAGE_STAGE2:
        worst = max(worst, float((problem.e_star - e).max()))
    if problem.cycle_cap_kwh is not None:
        worst = max(worst, float(d.sum() * dt - problem.cycle_cap_kwh))
    return worst


def solve_combined(problem: LpProblem) -> LpSolution:
    """Joint peak-shaving + arbitrage LP (cost in $ over the horizon)."""
    if problem.variant is not Variant.COMBINED:
        raise ValueError("problem variant must be COMBINED")
    return _solve(problem)


def solve_peak_shaving(problem: LpProblem) -> LpSolution:
    """Minimum-peak LP with the small SoC tie-breaker; yields (p*, e*)."""
    if problem.variant is not Variant.PEAK_SHAVING:
        raise ValueError("problem variant must be PEAK_SHAVING")
    return _solve(problem)


def solve_arbitrage_stage2(
    problem: LpProblem, p_star: float | None = None, e_star: np.ndarray | None = None
) -> LpSolution:
    """Arbitrage LP inside the stage-1 feasible set (peak and reserve fixed).

    ``p_star``/``e_star`` override the problem's stored stage-1 solution so a
    shared problem template can be reused.
    """
    if p_star is not None or e_star is not None:
        import dataclasses

        problem = dataclasses.replace(problem, p_star=p_star, e_star=e_star)
    if problem.variant is not Variant.ARBITRAGE_STAGE2:
        raise ValueError("problem variant must be ARBITRAGE_STAGE2")
    sol = _solve(problem)
    if not sol.optimal:
        raise SolverError(
            "stage-2 arbitrage LP infeasible; stage-1 solution should make it "
            "feasible by construction"
        )
    return sol


# ---------------------------------------------------------------------------
# Training targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HindsightTargets:
    """Per-step optimal SoC reserve (kWh, end of step) and per-step daily
    peak target (kW): the hindsight net demand's maximum over each local
    calendar day, broadcast to the day's steps."""

    start: "np.datetime64 | object"
    step_minutes: int
    e_hist: np.ndarray
    p_hist: np.ndarray
    net: np.ndarray

    def __len__(self) -> int:
        return self.e_hist.size


def extract_targets(
    ps_solution: LpSolution, demand: DemandSeries, dt_hours: float | None = None
) -> HindsightTargets:
    """Pull (e_hist, p_hist) from an optimal peak-shaving solution."""
    if not ps_solution.optimal:
        raise SolverError("cannot extract targets from a non-optimal solution")
    net = ps_solution.net(demand.values)
    days = demand.day_index()
    p_hist = np.empty_like(net)
    for day in np.unique(days):
        mask = days == day
        p_hist[mask] = net[mask].max()
    return HindsightTargets(
        start=demand.start,
        step_minutes=demand.step_minutes,
        e_hist=ps_solution.e.copy(),
        p_hist=p_hist,
        net=net.copy(),
    )


def write_targets(targets: HindsightTargets, path) -> None:
    """timestamp,e_hist_kwh,p_hist_kw,net_demand_kw rows; values round-trip."""
    from datetime import timedelta

    from .series import _csv_text, atomic_write_text

    step = timedelta(minutes=targets.step_minutes)
    rows = (
        (
            (targets.start + i * step).isoformat(),
            repr(float(targets.e_hist[i])),
            repr(float(targets.p_hist[i])),
            repr(float(targets.net[i])),
        )
        for i in range(len(targets))
    )
    atomic_write_text(
        path, _csv_text(("timestamp", "e_hist_kwh", "p_hist_kw", "net_demand_kw"), rows)
    )


def read_targets(path) -> HindsightTargets:
    import csv as _csv

    from .series import ParseError, StructuralError, _parse_timestamp

    stamps, e_hist, p_hist, net = [], [], [], []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        want = ["timestamp", "e_hist_kwh", "p_hist_kw", "net_demand_kw"]
        if header is None or [c.strip() for c in header] != want:
            raise ParseError(f"line 1: expected header {','.join(want)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"line {lineno}: expected 4 fields, got {len(row)}")
            stamps.append(_parse_timestamp(row[0], lineno))
            try:
                e_hist.append(float(row[1]))
                p_hist.append(float(row[2]))
                net.append(float(row[3]))
            except ValueError:
                raise ParseError(f"line {lineno}: bad number") from None
    if not stamps:
        raise ParseError(f"{path}: no data rows")
    if len(stamps) > 1:
        step = stamps[1] - stamps[0]
        step_minutes = int(step.total_seconds() // 60)
        if step_minutes <= 0 or any(
            (b - a) != step for a, b in zip(stamps, stamps[1:])
        ):
            raise StructuralError(f"{path}: timestamps are not a uniform grid")
    else:
        step_minutes = 5
    return HindsightTargets(
        start=stamps[0],
        step_minutes=step_minutes,
        e_hist=np.array(e_hist),
        p_hist=np.array(p_hist),
        net=np.array(net),
    )


def solve_targets_by_month(
    demand: DemandSeries, params: BatteryParams, delta: float | None = None
) -> HindsightTargets:
    """Peak-shaving LP per calendar month (the demand-charge settlement
    horizon), chaining the terminal SoC of one month into the next."""
    e_parts, p_parts, net_parts = [], [], []
    par = params
    for (_ym, sl) in month_slices(demand):
        chunk = demand.values[sl.start : sl.stop]
        problem = LpProblem(
            variant=Variant.PEAK_SHAVING,
            demand=chunk,
            dt_hours=demand.dt_hours,
            params=par,
            delta=delta,
        )
        sol = solve_peak_shaving(problem)
        if not sol.optimal:
            raise InfeasibleError(f"peak-shaving LP {sol.status.value} for month slice {sl}")
        month_series = demand.slice(sl.start, sl.stop)
        t = extract_targets(sol, month_series)
        e_parts.append(t.e_hist)
        p_parts.append(t.p_hist)
        net_parts.append(t.net)
        par = BatteryParams(
            p_max=par.p_max,
            e_max=par.e_max,
            e_min=par.e_min,
            eta=par.eta,
            e0=float(sol.e[-1]),
            c_deg=par.c_deg,
            cycle_limit_per_day=par.cycle_limit_per_day,
        )
    return HindsightTargets(
        start=demand.start,
        step_minutes=demand.step_minutes,
        e_hist=np.concatenate(e_parts),
        p_hist=np.concatenate(p_parts),
        net=np.concatenate(net_parts),
    )


def solve_hindsight_benchmark(
    demand: DemandSeries,
    prices: PriceSeries,
    params: BatteryParams,
    kappa_by_month: list[float],
) -> DispatchSchedule:
    """Combined LP per calendar month with the optional average-cycle cap,
    chaining SoC across months; the deterministic perfect-foresight
    benchmark trajectory."""
    slices = month_slices(demand)
    if len(kappa_by_month) != len(slices):
        raise ValueError("kappa_by_month must have one entry per calendar month")
    d_parts, q_parts, e_parts, net_parts = [], [], [], []
    par = params
    for kappa, (_ym, sl) in zip(kappa_by_month, slices):
        chunk = demand.values[sl.start : sl.stop]
        cap = None
        if par.cycle_limit_per_day is not None:
            days = chunk.size * demand.dt_hours / 24.0
            cap = par.cycle_limit_per_day * days * par.e_max
        problem = LpProblem(
            variant=Variant.COMBINED,
            demand=chunk,
            prices=prices.values[sl.start : sl.stop],
            dt_hours=demand.dt_hours,
            params=par,
            kappa=kappa,
            cycle_cap_kwh=cap,
        )
        sol = solve_combined(problem)
        if not sol.optimal:
            raise InfeasibleError(f"combined LP {sol.status.value} for month slice {sl}")
        d_parts.append(sol.d)
        q_parts.append(sol.q)
        e_parts.append(sol.e)
        net_parts.append(sol.net(chunk))
        par = BatteryParams(
            p_max=par.p_max,
            e_max=par.e_max,
            e_min=par.e_min,
            eta=par.eta,
            e0=float(sol.e[-1]),
            c_deg=par.c_deg,
            cycle_limit_per_day=par.cycle_limit_per_day,
        )
    return DispatchSchedule(
        start=demand.start,
        step_minutes=demand.step_minutes,
        demand=demand.values.copy(),
        d=np.concatenate(d_parts),
        q=np.concatenate(q_parts),
        e=np.concatenate(e_parts),
        net=np.concatenate(net_parts),
    )


# ---------------------------------------------------------------------------
# Two-stage equivalence check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    """Numerical comparison of the combined LP against the two-stage pair.

    ``applicable`` is False when kappa is too small for the decomposition
    premise (kappa >> energy-cost coefficients) to hold, in which case the
    gaps are reported but carry no pass/fail meaning.
    """

    kappa: float
    applicable: bool
    p_combined: float
    p_star: float
    arb_combined: float
    arb_two_stage: float

    @property
    def peak_gap(self) -> float:
        return abs(self.p_combined - self.p_star)

    @property
    def arb_gap(self) -> float:
        return abs(self.arb_combined - self.arb_two_stage)

    @property
    def arb_gap_rel(self) -> float:
        scale = max(1.0, abs(self.arb_combined), abs(self.arb_two_stage))
        return self.arb_gap / scale


#: kappa must exceed this multiple of max(lambda)*dt*T for the equivalence
#: premise to apply
APPLICABLE_KAPPA_FACTOR = 1e3


def verify_proposition1(
    demand: np.ndarray,
    prices: np.ndarray,
    dt_hours: float,
    params: BatteryParams,
    kappa_scale: float = 1e4,
    delta: float | None = None,
) -> EquivalenceReport:
    """Solve the combined LP with kappa = kappa_scale * max(lambda) * dt * T
    and the two-stage pair on the same data; report the peak gap and the
    arbitrage-objective gap."""
    demand = np.asarray(demand, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    T = demand.size
    lam_scale = float(np.abs(prices).max()) * dt_hours * T
    kappa = kappa_scale * lam_scale

    comb = solve_combined(
        LpProblem(
            variant=Variant.COMBINED,
            demand=demand,
            prices=prices,
            dt_hours=dt_hours,
            params=params,
            kappa=kappa,
        )
    )
    ps = solve_peak_shaving(
        LpProblem(
            variant=Variant.PEAK_SHAVING,
            demand=demand,
            dt_hours=dt_hours,
            params=params,
            delta=delta,
        )
    )
    if not (comb.optimal and ps.optimal):
        raise InfeasibleError("equivalence check needs both solves optimal")
    arb = solve_arbitrage_stage2(
        LpProblem(
            variant=Variant.ARBITRAGE_STAGE2,
            demand=demand,
            prices=prices,
            dt_hours=dt_hours,
            params=params,
            p_star=ps.p_star,
            e_star=ps.e,
        )
    )
    # arbitrage-only part of the combined objective: drop the fixed
    # sum(lambda*D)*dt term and the kappa*p term
    arb_part = comb.objective - float(np.dot(prices, demand) * dt_hours) - kappa * comb.p_star
    return EquivalenceReport(
        kappa=kappa,
        applicable=kappa >= APPLICABLE_KAPPA_FACTOR * lam_scale,
        p_combined=comb.p_star,
        p_star=ps.p_star,
        arb_combined=arb_part,
        arb_two_stage=arb.objective,
    )


def random_instance(seed: int, t_min: int = 24, t_max: int = 288):
    """Seeded random (demand, prices, dt_hours, params) for equivalence and
    oracle tests."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(t_min, t_max + 1))
    dt = float(rng.choice([1.0, 0.5, 1.0 / 12.0]))
    base = rng.uniform(200.0, 1500.0)
    demand = base + rng.uniform(0.3, 0.8) * base * rng.random(T)
    prices = rng.uniform(0.01, 0.04) + rng.uniform(0.02, 0.12) * rng.random(T)
    p_max = float(rng.uniform(50.0, 500.0))
    e_max = p_max * float(rng.uniform(1.0, 4.0))
    e_min = e_max * float(rng.uniform(0.0, 0.3))
    params = BatteryParams(
        p_max=p_max,
        e_max=e_max,
        e_min=e_min,
        eta=float(rng.uniform(0.85, 0.98)),
        e0=float(rng.uniform(e_min, e_max)),
        c_deg=float(rng.choice([0.0, 0.005])),
    )
    return demand, prices, dt, params
