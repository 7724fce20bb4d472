"""Non-anticipatory arbitrage bid policies.

The real-time controller consumes arbitrage bids (q_arb, d_arb) from any
policy implementing :class:`ArbitragePolicy`. The shipped default is a
marginal-value table trained by backward induction on historical prices:
discharge at full power when the price clears the marginal value of stored
energy adjusted for efficiency and degradation, charge at full power when
it is below the efficiency-discounted value, otherwise idle. The interface
takes only current information, so any implementation is non-anticipatory
by construction.
"""

from __future__ import annotations

import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import kernels
from .battery import BatteryParams
from .series import PriceSeries

log = logging.getLogger(__name__)

POLICY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Headroom:
    """Controller hints: the most charge/discharge power stage 2 could use
    this step. Policies may ignore them; the controller caps bids anyway."""

    q_max_hint: float
    d_max_hint: float


@runtime_checkable
class ArbitragePolicy(Protocol):
    def step(
        self, price_now: float, soc: float, headroom: Headroom, params: BatteryParams
    ) -> tuple[float, float]:
        """Return (q_arb, d_arb) bids in kW; at most one positive."""


@dataclass(frozen=True)
class ValueTablePolicy:
    """Piecewise-linear marginal value of stored energy, $/kWh vs SoC.

    soc_points are segment midpoints of the training grid; v is the
    horizon-averaged marginal value, nonincreasing in SoC.
    """

    soc_points: np.ndarray
    v: np.ndarray
    dp_value_at_e0: float = 0.0

    def __post_init__(self):
        if self.soc_points.shape != self.v.shape or self.soc_points.size < 1:
            raise ValueError("soc_points and v must be matching non-empty arrays")
        if np.any(np.diff(self.v) > 1e-9 * (1 + np.abs(self.v).max())):
            raise ValueError("marginal value must be nonincreasing in SoC")

    def value_at(self, soc: float) -> float:
        return float(np.interp(soc, self.soc_points, self.v))

    def step(
        self, price_now: float, soc: float, headroom: Headroom, params: BatteryParams
    ) -> tuple[float, float]:
        v_e = self.value_at(soc)
        if price_now > v_e / params.eta + params.c_deg:
            return 0.0, params.p_max
        if price_now < v_e * params.eta:
            return params.p_max, 0.0
        return 0.0, 0.0


@dataclass(frozen=True)
class NullPolicy:
    """No arbitrage: always bids zero."""

    def step(self, price_now, soc, headroom, params):
        return 0.0, 0.0


def transition_matrices(params: BatteryParams, dt_hours: float, soc_bins: int):
    """SoC grid plus per-transition delivered/bought energy and feasibility."""
    grid = np.linspace(params.e_min, params.e_max, soc_bins)
    diff = grid[None, :] - grid[:, None]  # e_j - e_i
    delivered = np.where(diff < 0, -diff * params.eta, 0.0)  # kWh to the meter
    bought = np.where(diff > 0, diff / params.eta, 0.0)  # kWh from the meter
    max_up = params.eta * params.p_max * dt_hours
    max_dn = params.p_max * dt_hours / params.eta
    feasible = (diff <= max_up + 1e-12) & (-diff <= max_dn + 1e-12)
    trade = delivered - bought
    return grid, trade, delivered, feasible


def train_value_table(
    prices_hist: PriceSeries, params: BatteryParams, soc_bins: int = 100
) -> ValueTablePolicy:
    """Backward dynamic program over a discretized SoC grid maximizing
    arbitrage profit under the battery constraints; stores the horizon-
    averaged marginal value per SoC segment."""
    if soc_bins < 2:
        raise ValueError(f"soc_bins must be >= 2, got {soc_bins}")
    n_days = len(prices_hist) * prices_hist.dt_hours / 24.0
    if n_days < 28:
        log.warning(
            "value table trained on %.1f days of prices; a month or more is recommended",
            n_days,
        )
    grid, trade, delivered, feasible = transition_matrices(
        params, prices_hist.dt_hours, soc_bins
    )
    v0, marg = kernels.dp_backward(
        prices_hist.values, trade, delivered, feasible, params.c_deg, grid
    )
    # concavity can wobble at float precision; enforce it exactly
    marg = np.minimum.accumulate(marg)
    midpoints = 0.5 * (grid[:-1] + grid[1:])
    return ValueTablePolicy(
        soc_points=midpoints,
        v=marg,
        dp_value_at_e0=float(np.interp(params.e0, grid, v0)),
    )


def save_policy(path, policy: ValueTablePolicy) -> None:
    meta = {"format_version": POLICY_FORMAT_VERSION, "dp_value_at_e0": policy.dp_value_at_e0}
    buf = io.BytesIO()
    np.savez_compressed(
        buf,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        soc_points=policy.soc_points,
        v=policy.v,
    )
    d = os.path.dirname(os.path.abspath(os.fspath(path)))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-policy-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_policy(path) -> ValueTablePolicy:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != POLICY_FORMAT_VERSION:
            raise ValueError(f"unsupported policy format version {meta.get('format_version')}")
        return ValueTablePolicy(
            soc_points=data["soc_points"],
            v=data["v"],
            dp_value_at_e0=float(meta["dp_value_at_e0"]),
        )
