"""TOML run configuration: schema, validation, defaults.

One file configures everything; CLI flags override file values. Unknown
keys are rejected so typos fail loudly before any compute starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .battery import BatteryParams
from .billing import TariffSchedule
from .kernel import KernelConfig

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_SCHEMA = {
    "battery": {
        "p_max_kw": float,
        "duration_hours": float,
        "e_min_frac": float,
        "e0_frac": float,
        "eta": float,
        "c_deg": float,
        "cycle_limit_per_day": float,
    },
    "tariff": {
        "kappa_summer": float,
        "kappa_nonsummer": float,
        "customer_charge": float,
        "metric_interval_minutes": int,
        "metric_consecutive_intervals": int,
    },
    "kernel": {
        "lookback_hours": float,
        "sigma_kw": float,
        "k": int,
        "alpha": float,
    },
    "arbitrage": {
        "soc_bins": int,
    },
    "paths": {
        "demand": str,
        "prices": str,
        "demand_train": str,
        "prices_train": str,
        "demand_test": str,
        "prices_test": str,
    },
    "backtest": {
        "sizes_kw": list,
        "step_minutes": int,
    },
    "tune": {
        "w_grid_hours": list,
        "sigma_grid": list,
        "k_grid": list,
        "validation_days": int,
        "refine_points": int,
    },
}

_DEFAULTS = {
    "battery": {
        "p_max_kw": 600.0,
        "duration_hours": 2.2,
        "e_min_frac": 0.2,
        "e0_frac": 0.5,
        "eta": 0.9,
    },
    "tariff": {},
    "kernel": {"lookback_hours": 6.0, "sigma_kw": 100.0, "k": 10, "alpha": 0.9},
    "arbitrage": {"soc_bins": 100},
    "paths": {},
    "backtest": {"step_minutes": 5},
    "tune": {},
}


@dataclass(frozen=True)
class RunConfig:
    raw: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        merged = dict(_DEFAULTS.get(name, {}))
        merged.update(self.raw.get(name, {}))
        return merged

    def battery(self) -> BatteryParams:
        b = self.section("battery")
        if "c_deg" not in b:
            log.warning(
                "battery.c_deg not set; degradation cost defaults to 0 $/kWh "
                "(no published value exists for this parameter)"
            )
        return BatteryParams.from_config(
            p_max_kw=b["p_max_kw"],
            duration_hours=b["duration_hours"],
            e_min_frac=b["e_min_frac"],
            e0_frac=b["e0_frac"],
            eta=b["eta"],
            c_deg=b.get("c_deg", 0.0),
            cycle_limit_per_day=b.get("cycle_limit_per_day"),
        )

    def tariff(self) -> TariffSchedule:
        return TariffSchedule(**self.section("tariff"))

    def kernel(self, step_minutes: int) -> KernelConfig:
        k = self.section("kernel")
        lookback = int(round(k["lookback_hours"] * 60.0 / step_minutes))
        return KernelConfig(
            lookback=max(1, lookback), sigma=k["sigma_kw"], k=k["k"], alpha=k["alpha"]
        )

    def path(self, key: str, override=None):
        if override is not None:
            return override
        paths = self.section("paths")
        if key not in paths:
            raise ConfigError(f"paths.{key} missing from config and no flag given")
        return paths[key]


def _validate(raw: dict) -> None:
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; known: {sorted(_SCHEMA)}"
            )
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        schema = _SCHEMA[section]
        for key, value in content.items():
            if key not in schema:
                raise ConfigError(
                    f"unknown key {section}.{key}; known: {sorted(schema)}"
                )
            want = schema[key]
            if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
                continue
            if want is int and isinstance(value, int) and not isinstance(value, bool):
                continue
            if want is str and isinstance(value, str):
                continue
            if want is list and isinstance(value, list):
                continue
            raise ConfigError(
                f"{section}.{key} must be {want.__name__}, got {type(value).__name__}"
            )


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    _validate(raw)
    return RunConfig(raw=raw)


def empty_config() -> RunConfig:
    return RunConfig(raw={})


def dump_kernel_toml(config: KernelConfig, step_minutes: int) -> str:
    """Render a tuned kernel config as a config-file fragment."""
    lookback_hours = config.lookback * step_minutes / 60.0
    return (
        "[kernel]\n"
        f"lookback_hours = {lookback_hours}\n"
        f"sigma_kw = {config.sigma}\n"
        f"k = {config.k}\n"
        f"alpha = {config.alpha}\n"
    )
