"""Command-line surface binding all modules.

Subcommands: hindsight, train, train-arb, backtest, backtest-sweep, tune,
report, synth, verify-prop1. Every run is reproducible from the config
file plus seeds; outputs are written atomically. Exit codes: 0 success,
1 usage, 2 data/config error, 3 infeasible or failed optimization.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .arbitrage import load_policy, save_policy, train_value_table
from .backtest import ScenarioConfig, run_sweep
from .battery import BatteryError
from .billing import total_cost
from .config import (
    CONFIG_SCHEMA_VERSION,
    ConfigError,
    dump_kernel_toml,
    empty_config,
    load_config,
)
from .controller import ControlError, predictions_for, run_controller
from .hindsight import (
    InfeasibleError,
    SolverError,
    random_instance,
    read_targets,
    solve_targets_by_month,
    verify_proposition1,
    write_targets,
)
from .kernel import KernelError, build_training_set, load_model, save_model
from .schedule import DispatchSchedule
from .series import (
    SeriesError,
    align,
    atomic_write_text,
    load_series,
    write_series,
)
from .synth import synth_demand, synth_prices
from .tuning import SearchError, SearchSpec, tune

log = logging.getLogger("peakshave")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_from(args) -> "RunConfig":
    if getattr(args, "config", None):
        return load_config(args.config)
    return empty_config()


def _load_pair(args, cfg):
    demand = load_series(args.demand, "demand")
    prices = load_series(args.prices, "price")
    return align(demand, prices)


def cmd_synth(args) -> int:
    if args.kind in ("demand", "both"):
        series = synth_demand(
            days=args.days,
            seed=args.seed,
            mean_kw=args.mean_kw,
            std_kw=args.std_kw,
            step_minutes=args.step_minutes,
        )
        write_series(series, args.out_demand)
        print(f"wrote {args.out_demand} ({len(series)} steps)")
    if args.kind in ("price", "both"):
        series = synth_prices(days=args.days, seed=args.seed + 1)
        write_series(series, args.out_prices)
        print(f"wrote {args.out_prices} ({len(series)} steps)")
    return EXIT_OK


def cmd_hindsight(args) -> int:
    cfg = _config_from(args)
    demand = load_series(args.demand, "demand")
    params = cfg.battery()
    targets = solve_targets_by_month(demand, params)
    write_targets(targets, args.out)
    print(f"wrote {args.out} ({len(targets)} steps)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from(args)
    demand = load_series(args.demand, "demand")
    targets = read_targets(args.targets)
    if len(targets) != len(demand) or targets.start != demand.start:
        raise SeriesError("targets do not cover the same steps as the demand history")
    kconfig = cfg.kernel(demand.step_minutes)
    training = build_training_set(demand, targets, kconfig.lookback)
    save_model(args.out, training, kconfig)
    n = sum(len(p) for p in training.pools.values())
    print(f"wrote {args.out} ({n} training entries, lookback {kconfig.lookback} steps)")
    return EXIT_OK


def cmd_train_arb(args) -> int:
    cfg = _config_from(args)
    prices = load_series(args.prices, "price")
    params = cfg.battery()
    soc_bins = cfg.section("arbitrage")["soc_bins"]
    policy = train_value_table(prices, params, soc_bins)
    save_policy(args.out, policy)
    print(
        f"wrote {args.out} (v from {policy.v[-1]:.4f} to {policy.v[0]:.4f} $/kWh, "
        f"dp value at e0 ${policy.dp_value_at_e0:,.2f})"
    )
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config_from(args)
    demand, prices = _load_pair(args, cfg)
    params = cfg.battery()
    training, kconfig = load_model(args.model)
    policy = load_policy(args.arb) if args.arb else None
    e_hat, p_pred, _f, _s, _i = predictions_for(demand, training, kconfig)
    schedule = run_controller(demand, prices, e_hat, p_pred, params, policy)
    schedule.to_csv(args.out)
    print(f"wrote {args.out} ({len(schedule)} steps)")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config_from(args)
    schedule = DispatchSchedule.from_csv(args.schedule)
    prices = load_series(cfg.path("prices", args.prices), "price")
    from .series import DemandSeries

    net = DemandSeries(
        schedule.start, schedule.step_minutes, schedule.net, is_net=True
    )
    demand = DemandSeries(schedule.start, schedule.step_minutes, schedule.demand)
    _net, prices_a = align(net, prices)
    tariff = cfg.tariff()
    params = cfg.battery()
    bill = total_cost(net, schedule, prices_a, tariff, params)
    baseline = total_cost(
        demand.with_values(demand.values, is_net=True), None, prices_a, tariff
    )
    out = {
        "schedule": bill.to_dict(),
        "no_storage": baseline.to_dict(),
        "savings": baseline.total - bill.total,
    }
    atomic_write_text(args.out, json.dumps(out, indent=2) + "\n")
    print(f"wrote {args.out} (total ${bill.total:,.2f}, savings ${out['savings']:,.2f})")
    return EXIT_OK


def _parse_sizes(text: str) -> tuple[float, ...]:
    try:
        sizes = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad --sizes list: {text!r}") from None
    if not sizes:
        raise ConfigError("--sizes must name at least one battery size")
    return sizes


def _scenario_from(cfg, step_minutes, sizes) -> ScenarioConfig:
    b = cfg.section("battery")
    return ScenarioConfig(
        sizes_kw=sizes,
        kernel=cfg.kernel(step_minutes),
        tariff=cfg.tariff(),
        duration_hours=b["duration_hours"],
        e_min_frac=b["e_min_frac"],
        e0_frac=b["e0_frac"],
        eta=b["eta"],
        c_deg=b.get("c_deg", 0.0),
        cycle_limit_per_day=b.get("cycle_limit_per_day", 1.0),
        soc_bins=cfg.section("arbitrage")["soc_bins"],
    )


def cmd_backtest_sweep(args) -> int:
    cfg = _config_from(args)
    demand_train = load_series(cfg.path("demand_train", args.demand_train), "demand")
    prices_train = load_series(cfg.path("prices_train", args.prices_train), "price")
    demand_test = load_series(cfg.path("demand_test", args.demand_test), "demand")
    prices_test = load_series(cfg.path("prices_test", args.prices_test), "price")
    sizes = _parse_sizes(args.sizes)
    scenario = _scenario_from(cfg, demand_test.step_minutes, sizes)
    jobs = args.jobs or (os.cpu_count() or 1)
    report = run_sweep(
        demand_train, prices_train, demand_test, prices_test, scenario, jobs=jobs
    )
    atomic_write_text(args.out, report.to_json() + "\n")
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    atomic_write_text(csv_path, report.summary_csv())
    for row in report.summary_rows():
        print(
            f"{row['size_kw']:7.0f} kW: controller {row['controller_savings_pct']:6.2f}% "
            f"hindsight {row['hindsight_savings_pct']:6.2f}% "
            f"capture {row['capture_ratio']:.3f} cycles {row['controller_cycles']:.0f}"
        )
    print(f"wrote {args.out} and {csv_path}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config_from(args)
    demand_train = load_series(cfg.path("demand_train", args.demand_train), "demand")
    prices_train = load_series(cfg.path("prices_train", args.prices_train), "price")
    t = cfg.section("tune")
    spec = SearchSpec(
        w_grid=tuple(
            int(h * 60 / demand_train.step_minutes) for h in t.get("w_grid_hours", ())
        ),
        sigma_grid=tuple(t.get("sigma_grid", SearchSpec.sigma_grid)),
        k_grid=tuple(t.get("k_grid", SearchSpec.k_grid)),
        refine_points=t.get("refine_points", 3),
        validation_days=t.get("validation_days"),
    )
    b = cfg.section("battery")
    scenario = _scenario_from(cfg, demand_train.step_minutes, (b["p_max_kw"],))
    best, trace = tune(spec, demand_train, prices_train, scenario)
    atomic_write_text(args.out, dump_kernel_toml(best, demand_train.step_minutes))
    lines = ["stage,lookback,sigma,k,alpha,savings,cycles"]
    for entry in trace:
        c = entry.config
        lines.append(
            f"{entry.stage},{c.lookback},{c.sigma!r},{c.k},{c.alpha!r},"
            f"{entry.savings!r},{entry.cycles!r}"
        )
    atomic_write_text(args.trace, "\n".join(lines) + "\n")
    print(
        f"best: lookback={best.lookback} steps sigma={best.sigma} k={best.k} "
        f"({len(trace)} evaluations); wrote {args.out}, {args.trace}"
    )
    return EXIT_OK


def cmd_verify_prop1(args) -> int:
    worst_peak = 0.0
    worst_arb = 0.0
    n_applicable = 0
    for i in range(args.instances):
        demand, prices, dt, params = random_instance(args.seed + i)
        rep = verify_proposition1(demand, prices, dt, params, kappa_scale=args.kappa_scale)
        if rep.applicable:
            n_applicable += 1
            worst_peak = max(worst_peak, rep.peak_gap)
            worst_arb = max(worst_arb, rep.arb_gap_rel)
        else:
            print(
                f"instance {i}: kappa scale {args.kappa_scale:g} below the "
                f"decomposition premise; gaps not checked "
                f"(peak gap {rep.peak_gap:.3e})"
            )
    print(
        f"{n_applicable}/{args.instances} applicable instances: "
        f"max |p_comb - p*| = {worst_peak:.3e} kW, "
        f"max relative arbitrage gap = {worst_arb:.3e}"
    )
    if n_applicable and (worst_peak > 1e-6 or worst_arb > 1e-6):
        print("equivalence FAILED the 1e-6 tolerance", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="peakshave", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"peakshave {__version__} (config schema v{CONFIG_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="TOML run configuration")
        return p

    p = add("synth", cmd_synth, "generate seeded synthetic demand/price CSVs")
    p.add_argument("--kind", choices=("demand", "price", "both"), default="both")
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean-kw", type=float, default=1200.0)
    p.add_argument("--std-kw", type=float, default=180.0)
    p.add_argument("--step-minutes", type=int, default=5)
    p.add_argument("--out-demand", default="demand.csv")
    p.add_argument("--out-prices", default="prices.csv")

    p = add("hindsight", cmd_hindsight, "solve monthly peak-shaving LPs, emit targets")
    p.add_argument("--demand", required=True)
    p.add_argument("--prices", help="accepted for interface symmetry; unused")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "build the kernel training set from targets")
    p.add_argument("--demand", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True)

    p = add("train-arb", cmd_train_arb, "train the arbitrage value table")
    p.add_argument("--prices", required=True)
    p.add_argument("--out", required=True)

    p = add("backtest", cmd_backtest, "run the real-time controller over a test range")
    p.add_argument("--demand", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--arb", help="arbitrage policy artifact; omit for peak shaving only")
    p.add_argument("--out", required=True)

    p = add("backtest-sweep", cmd_backtest_sweep, "battery-size sweep with full metrics")
    p.add_argument("--sizes", required=True, help="comma-separated kW ratings")
    p.add_argument("--demand-train")
    p.add_argument("--prices-train")
    p.add_argument("--demand-test")
    p.add_argument("--prices-test")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: cores)")
    p.add_argument("--out", default="report.json")

    p = add("tune", cmd_tune, "tiered hyperparameter search")
    p.add_argument("--demand-train")
    p.add_argument("--prices-train")
    p.add_argument("--out", default="best.toml")
    p.add_argument("--trace", default="trace.csv")

    p = add("report", cmd_report, "bill a dispatch schedule against a tariff")
    p.add_argument("--in", required=True, dest="schedule", metavar="SCHEDULE_CSV")
    p.add_argument("--tariff", dest="config", help="config file holding the tariff block")
    p.add_argument("--prices", help="price CSV; defaults to paths.prices from the config")
    p.add_argument("--out", required=True)

    p = add("verify-prop1", cmd_verify_prop1, "two-stage equivalence check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--kappa-scale", type=float, default=1e4)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except (SeriesError, ConfigError, KernelError, BatteryError, SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InfeasibleError, SolverError, ControlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
