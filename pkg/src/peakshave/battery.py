"""Battery parameters, state-of-charge arithmetic, and cycle accounting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

#: kWh slack allowed before a SoC bound breach becomes an error
SOC_TOL_KWH = 1e-9


class BatteryError(ValueError):
    """Invalid battery parameters or a SoC bound violation."""


@dataclass(frozen=True)
class BatteryParams:
    """Physical and economic battery description.

    p_max: charge/discharge power limit, kW (0 disables the battery)
    e_max / e_min: SoC bounds, kWh
    eta: single efficiency applied to both charge and discharge
    e0: initial SoC, kWh
    c_deg: degradation cost per kWh discharged, $/kWh
    cycle_limit_per_day: optional average daily cycle cap used by the
        hindsight benchmark (1.0 = one full discharge of e_max per day)
    """

    p_max: float
    e_max: float
    e_min: float = 0.0
    eta: float = 1.0
    e0: float | None = None
    c_deg: float = 0.0
    cycle_limit_per_day: float | None = None

    def __post_init__(self):
        if self.e0 is None:
            object.__setattr__(self, "e0", 0.5 * (self.e_min + self.e_max))
        if not 0 <= self.e_min < self.e_max:
            raise BatteryError(f"need 0 <= e_min < e_max, got [{self.e_min}, {self.e_max}]")
        if not 0 < self.eta <= 1:
            raise BatteryError(f"eta must be in (0, 1], got {self.eta}")
        if not self.e_min <= self.e0 <= self.e_max:
            raise BatteryError(f"e0={self.e0} outside [{self.e_min}, {self.e_max}]")
        if self.p_max < 0:
            raise BatteryError(f"p_max must be >= 0, got {self.p_max}")
        if self.c_deg < 0:
            raise BatteryError(f"c_deg must be >= 0, got {self.c_deg}")
        if self.cycle_limit_per_day is not None and self.cycle_limit_per_day <= 0:
            raise BatteryError("cycle_limit_per_day must be positive when set")

    @classmethod
    def from_config(
        cls,
        p_max_kw: float,
        duration_hours: float,
        e_min_frac: float = 0.2,
        e0_frac: float = 0.5,
        eta: float = 0.9,
        c_deg: float = 0.0,
        cycle_limit_per_day: float | None = None,
    ) -> "BatteryParams":
        """Build from the config-file convention (capacity = duration x power)."""
        e_max = duration_hours * p_max_kw
        if p_max_kw == 0:
            # disabled battery still needs a nonempty SoC interval
            e_max = max(e_max, 1.0)
        return cls(
            p_max=p_max_kw,
            e_max=e_max,
            e_min=e_min_frac * e_max,
            eta=eta,
            e0=e0_frac * e_max,
            c_deg=c_deg,
            cycle_limit_per_day=cycle_limit_per_day,
        )

    def scaled(self, p_max_kw: float) -> "BatteryParams":
        """Same relative sizing at a different power rating."""
        ratio = p_max_kw / self.p_max if self.p_max else 1.0
        return BatteryParams(
            p_max=p_max_kw,
            e_max=self.e_max * ratio,
            e_min=self.e_min * ratio,
            eta=self.eta,
            e0=self.e0 * ratio,
            c_deg=self.c_deg,
            cycle_limit_per_day=self.cycle_limit_per_day,
        )


def soc_step(
    e: float, d: float, q: float, dt_hours: float, params: BatteryParams
) -> float:
    """Advance SoC one step: e - (d*dt)/eta + eta*(q*dt), with d, q in kW.

    Results within ``SOC_TOL_KWH`` of a bound are snapped onto it; anything
    further out raises :class:`BatteryError` rather than clamping silently.
    """
    e_next = e - (d * dt_hours) / params.eta + params.eta * (q * dt_hours)
    if e_next < params.e_min:
        if e_next < params.e_min - SOC_TOL_KWH:
            raise BatteryError(f"SoC {e_next} below e_min={params.e_min}")
        return params.e_min
    if e_next > params.e_max:
        if e_next > params.e_max + SOC_TOL_KWH:
            raise BatteryError(f"SoC {e_next} above e_max={params.e_max}")
        return params.e_max
    return e_next


def annual_cycles(schedule, params: BatteryParams) -> float:
    """Total discharged energy over nominal capacity, scaled to a 365-day year.

    ``schedule`` is any object with ``d`` (kW per step) and ``dt_hours``.
    """
    d = np.asarray(schedule.d, dtype=np.float64)
    if d.size == 0:
        raise BatteryError("schedule is empty")
    dt = schedule.dt_hours
    span_days = d.size * dt / 24.0
    return float(d.sum() * dt / params.e_max * (365.0 / span_days))
