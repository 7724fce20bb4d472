import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from peakshave.battery import BatteryParams
from peakshave.series import DemandSeries, PriceSeries


@pytest.fixture
def battery():
    return BatteryParams(p_max=90.0, e_max=1000.0, e_min=100.0, eta=0.9, e0=500.0)


@pytest.fixture
def jan_start():
    return datetime(2024, 1, 1)


def make_demand(values, start=datetime(2024, 1, 1), step_minutes=5, **kw):
    return DemandSeries(start, step_minutes, np.asarray(values, dtype=float), **kw)


def make_prices(values, start=datetime(2024, 1, 1), step_minutes=5):
    return PriceSeries(start, step_minutes, np.asarray(values, dtype=float))


@pytest.fixture
def month_demand():
    """One calendar month of smooth spiky demand at 15-minute resolution."""
    rng = np.random.default_rng(3)
    n = 31 * 96
    tod = (np.arange(n) * 15 / 60.0) % 24.0
    vals = 900 + 350 * np.exp(-0.5 * ((tod - 14) / 3.0) ** 2) + rng.normal(0, 40, n)
    return make_demand(np.clip(vals, 0, None), start=datetime(2024, 1, 1), step_minutes=15)


@pytest.fixture
def month_prices():
    rng = np.random.default_rng(4)
    n = 31 * 96
    tod = (np.arange(n) * 15 / 60.0) % 24.0
    vals = 0.03 + 0.05 * np.exp(-0.5 * ((tod - 19) / 2.0) ** 2) + rng.normal(0, 0.003, n)
    return make_prices(np.clip(vals, 0.001, None), start=datetime(2024, 1, 1), step_minutes=15)
