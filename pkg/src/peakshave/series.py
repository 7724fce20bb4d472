"""Time-series containers, CSV ingestion, alignment, and calendar features.

All series are uniformly sampled. Flow quantities (demand, battery power)
are average power in kW over each step; prices are $/kWh. Calendar logic
(seasons, time-of-day) runs on the series' declared local clock, so
timestamps should be naive local time or carry a fixed UTC offset.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60


class SeriesError(ValueError):
    """Base class for time-series validation failures."""


class ParseError(SeriesError):
    """A CSV row could not be parsed; message carries the line number."""


class StructuralError(SeriesError):
    """Timestamps are not a uniform grid (gap larger than one step, etc.)."""


class AlignmentError(SeriesError):
    """Two series cannot be brought onto a common grid."""


class Season(Enum):
    SUMMER = "summer"
    NONSUMMER = "nonsummer"


def season_of(ts: datetime) -> Season:
    """Demand-charge season of a timestamp: June 1 - September 30 is summer."""
    return Season.SUMMER if 6 <= ts.month <= 9 else Season.NONSUMMER


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled series: start timestamp, step in minutes, values.

    Immutable after construction; the value buffer is set read-only so
    instances can be shared freely across parallel workers.
    """

    start: datetime
    step_minutes: int
    values: np.ndarray
    fill_count: int = field(default=0, compare=False)

    #: subclasses override validation behavior
    _allow_negative = True

    def __post_init__(self):
        if self.step_minutes <= 0 or 60 % self.step_minutes != 0:
            raise SeriesError(f"step_minutes must divide 60, got {self.step_minutes}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise SeriesError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(vals)):
            raise SeriesError("values must be finite")
        if not self._allow_negative and np.any(vals < 0):
            raise SeriesError(f"{type(self).__name__} values must be >= 0")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    @property
    def dt_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def end(self) -> datetime:
        """Exclusive end: the instant after the last covered step."""
        return self.start + len(self) * self.step

    def timestamp_at(self, i: int) -> datetime:
        return self.start + i * self.step

    def timestamps(self) -> list[datetime]:
        step = self.step
        return [self.start + i * step for i in range(len(self))]

    def index_of(self, ts: datetime) -> int:
        """Index of the step starting exactly at ``ts``."""
        offset = ts - self.start
        steps, rem = divmod(offset, self.step)
        if rem or not 0 <= steps < len(self):
            raise SeriesError(f"{ts} is not a grid point of this series")
        return int(steps)

    def slice(self, i0: int, i1: int) -> "TimeSeries":
        """Sub-series covering steps ``[i0, i1)``."""
        if not 0 <= i0 < i1 <= len(self):
            raise SeriesError(f"bad slice [{i0}, {i1}) for length {len(self)}")
        return dataclasses.replace(
            self, start=self.timestamp_at(i0), values=self.values[i0:i1], fill_count=0
        )

    def slice_range(self, t0: datetime, t1: datetime) -> "TimeSeries":
        return self.slice(self.index_of(t0), self.index_of(t1 - self.step) + 1)

    def minute_of_day(self) -> np.ndarray:
        """Local-clock minute-of-day per step, as float64."""
        m0 = self.start.hour * 60 + self.start.minute + self.start.second / 60.0
        return (m0 + np.arange(len(self)) * self.step_minutes) % MINUTES_PER_DAY

    def day_index(self) -> np.ndarray:
        """Ordinal local calendar day per step (changes at local midnight)."""
        base = self.start.toordinal()
        m0 = self.start.hour * 60 + self.start.minute + self.start.second / 60.0
        total_min = m0 + np.arange(len(self)) * self.step_minutes
        return base + (total_min // MINUTES_PER_DAY).astype(np.int64)

    def season_mask(self) -> np.ndarray:
        """Boolean mask per step, True where the step falls in summer."""
        days = self.day_index()
        uniq, inverse = np.unique(days, return_inverse=True)
        flags = np.array(
            [season_of(datetime.fromordinal(int(d))) is Season.SUMMER for d in uniq]
        )
        return flags[inverse]


@dataclass(frozen=True)
class DemandSeries(TimeSeries):
    """Building load in kW. Raw meter load is non-negative; a net-demand
    trajectory (load minus discharge plus charge) may export and is built
    with ``is_net=True``."""

    is_net: bool = field(default=False, compare=False)

    @property
    def _allow_negative(self):
        return self.is_net

    def with_values(self, values: np.ndarray, *, is_net: bool = True) -> "DemandSeries":
        return DemandSeries(self.start, self.step_minutes, values, is_net=is_net)


@dataclass(frozen=True)
class PriceSeries(TimeSeries):
    """Real-time energy price in $/kWh; negative prices are valid."""


@dataclass(frozen=True)
class CalendarFeatures:
    """Daily-period sine/cosine encoding of local time-of-day."""

    t_sin: np.ndarray
    t_cos: np.ndarray


def calendar_features(series: TimeSeries) -> CalendarFeatures:
    """sin/cos of the fractional local hour with a 24 h period.

    Midnight maps to (0, 1), 06:00 to (1, 0), 18:00 to (-1, 0).
    """
    phase = 2.0 * math.pi * series.minute_of_day() / MINUTES_PER_DAY
    return CalendarFeatures(np.sin(phase), np.cos(phase))


def month_slices(series: TimeSeries) -> list[tuple[tuple[int, int], slice]]:
    """Contiguous index ranges per calendar month, in chronological order."""
    days = series.day_index()
    keys = []
    bounds = [0]
    prev = None
    for i, d in enumerate(days):
        ym = _year_month_of_ordinal(int(d))
        if ym != prev:
            if prev is not None:
                bounds.append(i)
            keys.append(ym)
            prev = ym
    bounds.append(len(series))
    return [(keys[j], slice(bounds[j], bounds[j + 1])) for j in range(len(keys))]


def _year_month_of_ordinal(d: int) -> tuple[int, int]:
    dt = datetime.fromordinal(d)
    return dt.year, dt.month


def is_whole_months(series: TimeSeries) -> bool:
    """True when the series starts at a month boundary (local midnight on the
    1st) and ends exactly at a month boundary."""
    s, e = series.start, series.end
    return (
        s.day == 1
        and (s.hour, s.minute, s.second) == (0, 0, 0)
        and e.day == 1
        and (e.hour, e.minute, e.second) == (0, 0, 0)
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

_SERIES_TYPES = {"demand": DemandSeries, "price": PriceSeries}


def _parse_timestamp(text: str, lineno: int) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad timestamp {text!r}: {exc}") from None


def load_series(path, kind: str, step_minutes: int | None = None):
    """Load a ``timestamp,value`` CSV into a validated series.

    Single missing steps are filled by linear interpolation (the number of
    fills is recorded on the returned series and logged); longer gaps and
    non-uniform spacing raise :class:`StructuralError`. When ``step_minutes``
    is not given, the step is inferred as the smallest spacing in the file.

    Parameters
    ----------
    path: CSV file with header ``timestamp,value``
    kind: "demand" (kW, non-negative) or "price" ($/kWh)
    step_minutes: expected resolution; inferred when omitted
    """
    if kind not in _SERIES_TYPES:
        raise ValueError(f"kind must be one of {sorted(_SERIES_TYPES)}, got {kind!r}")
    cls = _SERIES_TYPES[kind]

    stamps: list[datetime] = []
    vals: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["timestamp", "value"]:
            raise ParseError(f"line 1: expected header 'timestamp,value', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ParseError(f"line {lineno}: expected 2 fields, got {len(row)}")
            ts = _parse_timestamp(row[0], lineno)
            try:
                v = float(row[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad value {row[1]!r}") from None
            if stamps and ts <= stamps[-1]:
                raise StructuralError(f"line {lineno}: timestamps not strictly increasing")
            stamps.append(ts)
            vals.append(v)

    if not stamps:
        raise ParseError(f"{path}: no data rows")

    if step_minutes is None:
        if len(stamps) < 2:
            raise StructuralError(f"{path}: cannot infer step from a single row")
        deltas = [(b - a) for a, b in zip(stamps, stamps[1:])]
        step = min(deltas)
        step_min = step.total_seconds() / 60.0
        if step_min != int(step_min):
            raise StructuralError(f"{path}: sub-minute spacing {step} unsupported")
        step_minutes = int(step_min)
    step = timedelta(minutes=step_minutes)

    out_vals: list[float] = [vals[0]]
    fills = 0
    for i in range(1, len(stamps)):
        gap = stamps[i] - stamps[i - 1]
        if gap == step:
            out_vals.append(vals[i])
        elif gap == 2 * step:
            out_vals.append(0.5 * (vals[i - 1] + vals[i]))
            out_vals.append(vals[i])
            fills += 1
        else:
            raise StructuralError(
                f"{path}: gap of {gap} between {stamps[i - 1]} and {stamps[i]} "
                f"exceeds one {step_minutes}-minute step"
            )
    if fills:
        log.warning("%s: interpolated %d single-step gap(s)", path, fills)
    return cls(stamps[0], step_minutes, np.array(out_vals), fill_count=fills)


def write_series(series: TimeSeries, path) -> None:
    """Write ``timestamp,value`` CSV; float repr round-trips bit-for-bit."""
    rows = ((ts.isoformat(), repr(float(v))) for ts, v in zip(series.timestamps(), series.values))
    _atomic_write_csv(path, ("timestamp", "value"), rows)


def _atomic_write_csv(path, header, rows) -> None:
    atomic_write_text(path, _csv_text(header, rows))


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file + rename so readers never see partials."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------


def align(demand: DemandSeries, price: PriceSeries) -> tuple[DemandSeries, PriceSeries]:
    """Trim both series to their common range and put the price on the
    demand grid.

    A coarser price (e.g. hourly real-time prices against 5-minute demand)
    is forward-filled: every demand step inside a price interval gets that
    interval's price. A price finer than the demand is not supported.
    """
    if price.step_minutes < demand.step_minutes:
        raise AlignmentError(
            f"price step {price.step_minutes} min finer than demand step "
            f"{demand.step_minutes} min is unsupported"
        )
    if price.step_minutes % demand.step_minutes != 0:
        raise AlignmentError(
            f"price step {price.step_minutes} min is not a multiple of demand step "
            f"{demand.step_minutes} min"
        )

    t0 = max(demand.start, price.start)
    t1 = min(demand.end, price.end)
    if t0 >= t1:
        raise AlignmentError("series have no overlapping time range")

    dstep = demand.step
    i0 = math.ceil((t0 - demand.start) / dstep)
    i1 = math.floor((t1 - demand.start) / dstep)
    if i1 <= i0:
        raise AlignmentError("overlap shorter than one demand step")
    trimmed = demand.slice(i0, i1)

    pstep = price.step
    pidx = np.array(
        [(trimmed.timestamp_at(i) - price.start) // pstep for i in range(len(trimmed))],
        dtype=np.int64,
    )
    resampled = PriceSeries(trimmed.start, trimmed.step_minutes, price.values[pidx])
    return trimmed, resampled
