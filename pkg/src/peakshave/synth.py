"""Deterministic synthetic demand and price generators.

Stand-ins for proprietary building telemetry: an office-weekly load shape
(weekday plateau, weekend low, summer uplift) with smooth AR(1) wander and
occasional business-hour spike events, affinely normalized to a requested
mean/std so sample statistics are exact by construction. Prices follow a
double-peaked daily shape (morning and evening) with seeded noise and
occasional scarcity spikes, roughly NYISO-like in level.
"""

from __future__ import annotations

import math
from datetime import datetime

import numpy as np

from .series import MINUTES_PER_DAY, DemandSeries, PriceSeries

_PROFILES = ("office-weekly",)


def _weekday_shape(minute_of_day: np.ndarray) -> np.ndarray:
    """Relative weekday load: night base, morning ramp, business plateau,
    evening rundown."""
    h = minute_of_day / 60.0
    shape = np.full(h.shape, 0.56)
    ramp_up = (h >= 6.0) & (h < 9.0)
    shape[ramp_up] = 0.56 + 0.44 * (h[ramp_up] - 6.0) / 3.0
    plateau = (h >= 9.0) & (h < 17.0)
    shape[plateau] = 1.0
    rundown = (h >= 17.0) & (h < 22.0)
    shape[rundown] = 1.0 - 0.44 * (h[rundown] - 17.0) / 5.0
    return shape


def _weekend_shape(minute_of_day: np.ndarray) -> np.ndarray:
    h = minute_of_day / 60.0
    bump = np.exp(-0.5 * ((h - 13.0) / 4.0) ** 2)
    return 0.56 + 0.12 * bump


def synth_demand(
    days: int,
    seed: int,
    profile: str = "office-weekly",
    step_minutes: int = 5,
    start: datetime | None = None,
    mean_kw: float = 1200.0,
    std_kw: float = 180.0,
    spike_prob_per_day: float = 0.3,
    spike_frac: float = 0.35,
    noise_scale: float = 1.0,
) -> DemandSeries:
    """Seeded office-building demand series.

    The weekly/seasonal shape plus AR(1) noise plus spikes is affinely
    rescaled so the sample mean and standard deviation equal ``mean_kw``
    and ``std_kw`` exactly. With ``noise_scale=0`` and
    ``spike_prob_per_day=0`` the series is the deterministic profile,
    identical across seeds.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if profile not in _PROFILES:
        raise ValueError(f"unknown profile {profile!r}; available: {_PROFILES}")
    if start is None:
        start = datetime(2023, 1, 1)
    rng = np.random.default_rng(seed)
    steps_per_day = MINUTES_PER_DAY // step_minutes
    n = days * steps_per_day

    minute = (
        start.hour * 60 + start.minute + np.arange(n, dtype=np.float64) * step_minutes
    ) % MINUTES_PER_DAY
    day_ord = start.toordinal() + (
        (start.hour * 60 + start.minute + np.arange(n) * step_minutes) // MINUTES_PER_DAY
    ).astype(np.int64)
    weekday = (day_ord - 1) % 7  # Monday=0 (ordinal 1 was a Monday)
    is_weekend = weekday >= 5

    shape = np.where(is_weekend, _weekend_shape(minute), _weekday_shape(minute))
    doy = (day_ord - datetime(start.year, 1, 1).toordinal()) % 365
    seasonal = 1.0 + 0.16 * np.cos(2.0 * math.pi * (doy - 205) / 365.0)

    # smooth AR(1) wander plus a little white noise
    phi = 0.985
    innov = rng.normal(0.0, 1.0, n)
    ar = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + innov[i]
        ar[i] = acc
    ar *= math.sqrt(1.0 - phi * phi)  # unit stationary variance
    noise = noise_scale * (0.055 * ar + 0.015 * rng.normal(0.0, 1.0, n))

    base = shape * seasonal * (1.0 + noise)

    # business-hour spike events (HVAC starts, events, equipment)
    spikes = np.zeros(n)
    for d in range(days):
        if rng.random() >= spike_prob_per_day:
            continue
        start_min = rng.uniform(9 * 60, 17 * 60)
        dur_steps = max(1, int(rng.uniform(15, 60) / step_minutes))
        amp = spike_frac * rng.uniform(0.6, 1.4)
        i0 = d * steps_per_day + int(start_min / step_minutes)
        i1 = min(i0 + dur_steps, n)
        window = np.sin(np.linspace(0.0, math.pi, i1 - i0)) ** 2
        spikes[i0:i1] += amp * window
    base = base + spikes

    # exact first/second moment normalization
    b_mean = base.mean()
    b_std = base.std()
    values = mean_kw + (base - b_mean) * (std_kw / b_std)
    if values.min() < 0:
        raise ValueError(
            "normalization produced negative demand; lower std_kw or raise mean_kw"
        )
    return DemandSeries(start, step_minutes, values)


def synth_prices(
    days: int,
    seed: int,
    step_minutes: int = 60,
    start: datetime | None = None,
    base_price: float = 0.030,
    morning_peak: float = 0.045,
    evening_peak: float = 0.075,
    noise_std: float = 0.004,
    spike_prob_per_day: float = 0.05,
) -> PriceSeries:
    """Seeded real-time energy price series ($/kWh) with morning and
    evening peaks and occasional scarcity spikes."""
    if days < 1:
        raise ValueError("days must be >= 1")
    if start is None:
        start = datetime(2023, 1, 1)
    rng = np.random.default_rng(seed)
    steps_per_day = MINUTES_PER_DAY // step_minutes
    n = days * steps_per_day
    minute = (
        start.hour * 60 + start.minute + np.arange(n, dtype=np.float64) * step_minutes
    ) % MINUTES_PER_DAY
    h = minute / 60.0

    shape = (
        base_price
        + morning_peak * np.exp(-0.5 * ((h - 8.0) / 1.6) ** 2)
        + evening_peak * np.exp(-0.5 * ((h - 19.0) / 2.2) ** 2)
    )
    phi = 0.9
    innov = rng.normal(0.0, 1.0, n)
    ar = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + innov[i]
        ar[i] = acc
    values = shape + noise_std * math.sqrt(1.0 - phi * phi) * ar

    for d in range(days):
        if rng.random() >= spike_prob_per_day:
            continue
        i0 = d * steps_per_day + int(rng.uniform(14 * 60, 21 * 60) / step_minutes)
        i1 = min(i0 + max(1, 120 // step_minutes), n)
        values[i0:i1] += rng.uniform(0.15, 0.60)

    np.clip(values, 0.001, None, out=values)
    return PriceSeries(start, step_minutes, values)
