"""Dispatch schedules: the per-step (d, q, SoC, net demand) record."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .series import ParseError, _csv_text, _parse_timestamp, atomic_write_text

CSV_COLUMNS = ("timestamp", "demand_kw", "d_kw", "q_kw", "soc_kwh", "net_kw", "p_running_kw")


@dataclass(frozen=True)
class DispatchSchedule:
    """Realized or optimized dispatch over a horizon.

    d / q are discharge / charge power (kW), e is SoC at the end of each
    step (kWh), net = demand - d + q (kW). Controller runs also carry the
    running peak target and the stage-1 components for invariant checks.
    """

    start: datetime
    step_minutes: int
    demand: np.ndarray
    d: np.ndarray
    q: np.ndarray
    e: np.ndarray
    net: np.ndarray
    p_running: np.ndarray | None = None
    d_ps: np.ndarray | None = field(default=None, compare=False)
    q_ps: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.demand.shape[0]
        for name in ("d", "q", "e", "net"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")

    def __len__(self) -> int:
        return self.demand.size

    @property
    def dt_hours(self) -> float:
        return self.step_minutes / 60.0

    def timestamps(self) -> list[datetime]:
        step = timedelta(minutes=self.step_minutes)
        return [self.start + i * step for i in range(len(self))]

    def slice(self, sl: slice) -> "DispatchSchedule":
        idx = range(*sl.indices(len(self)))
        return DispatchSchedule(
            start=self.start + idx[0] * timedelta(minutes=self.step_minutes),
            step_minutes=self.step_minutes,
            demand=self.demand[sl],
            d=self.d[sl],
            q=self.q[sl],
            e=self.e[sl],
            net=self.net[sl],
            p_running=None if self.p_running is None else self.p_running[sl],
            d_ps=None if self.d_ps is None else self.d_ps[sl],
            q_ps=None if self.q_ps is None else self.q_ps[sl],
        )

    def to_csv(self, path) -> None:
        p_run = self.p_running
        if p_run is None:
            p_run = np.maximum.accumulate(self.net)
        rows = (
            (
                ts.isoformat(),
                repr(float(self.demand[i])),
                repr(float(self.d[i])),
                repr(float(self.q[i])),
                repr(float(self.e[i])),
                repr(float(self.net[i])),
                repr(float(p_run[i])),
            )
            for i, ts in enumerate(self.timestamps())
        )
        atomic_write_text(path, _csv_text(CSV_COLUMNS, rows))

    @classmethod
    def from_csv(cls, path) -> "DispatchSchedule":
        stamps: list[datetime] = []
        cols: list[list[float]] = [[] for _ in range(6)]
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
                raise ParseError(f"line 1: expected header {','.join(CSV_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 7:
                    raise ParseError(f"line {lineno}: expected 7 fields, got {len(row)}")
                stamps.append(_parse_timestamp(row[0], lineno))
                try:
                    for j in range(6):
                        cols[j].append(float(row[j + 1]))
                except ValueError:
                    raise ParseError(f"line {lineno}: bad number") from None
        if len(stamps) < 1:
            raise ParseError(f"{path}: no data rows")
        if len(stamps) > 1:
            step = stamps[1] - stamps[0]
            step_minutes = int(step.total_seconds() // 60)
        else:
            step_minutes = 5
        return cls(
            start=stamps[0],
            step_minutes=step_minutes,
            demand=np.array(cols[0]),
            d=np.array(cols[1]),
            q=np.array(cols[2]),
            e=np.array(cols[3]),
            net=np.array(cols[4]),
            p_running=np.array(cols[5]),
        )
