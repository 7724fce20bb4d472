"""Benchmark the numba-compiled kernels against the pure-numpy fallbacks.

Run:  python bench/bench_kernels.py [--quick]

Each hot kernel is timed on a realistic workload (year-scale controller
loop, season-pool-sized neighbor search, month-scale value recursion).
The same arrays feed both paths and the outputs are cross-checked, so the
table doubles as an equivalence smoke test.
"""

import argparse
import time

import numpy as np

from peakshave import kernels
from peakshave.arbitrage import transition_matrices
from peakshave.battery import BatteryParams


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_knn(rng, quick):
    n_query = 2_000 if quick else 10_000
    n_pool = 20_000 if quick else 70_000
    dims = 74  # 6-hour lookback at 5 minutes plus the two phase features
    k = 10
    pool = rng.uniform(500.0, 2000.0, (n_pool, dims))
    queries = rng.uniform(500.0, 2000.0, (n_query, dims))
    t_nb, (i_nb, d_nb) = timeit(lambda: kernels.knn_search_numba(queries, pool, k), repeats=2)
    t_np, (i_np, d_np) = timeit(lambda: kernels.knn_search_numpy(queries, pool, k), repeats=2)
    assert np.array_equal(i_nb, i_np)
    assert np.allclose(d_nb, d_np, rtol=1e-9, atol=1e-9)
    return "knn_search", f"{n_query}x{n_pool}x{dims}, k={k}", t_nb, t_np


def bench_quantile(rng, quick):
    n = 100_000 if quick else 500_000
    k = 10
    values = rng.uniform(0.0, 1000.0, (n, k))
    weights = rng.dirichlet(np.ones(k), size=n)
    t_nb, a = timeit(lambda: kernels.weighted_quantile_numba(values, weights, 0.9))
    t_np, b = timeit(lambda: kernels.weighted_quantile_numpy(values, weights, 0.9))
    assert np.array_equal(a, b)
    return "weighted_quantile", f"{n} rows, k={k}", t_nb, t_np


def bench_controller(rng, quick):
    n = 105_120 if not quick else 20_000  # one year at 5 minutes
    demand = rng.uniform(500.0, 2000.0, n)
    e_hat = rng.uniform(264.0, 1320.0, n)
    p_pred = rng.uniform(1200.0, 1800.0, n)
    flags = np.zeros(n, dtype=bool)
    flags[:: n // 12 + 1] = True
    prices = rng.uniform(0.01, 0.2, n)
    table_x = np.linspace(264.0, 1320.0, 99)
    table_v = np.linspace(0.09, 0.02, 99)
    args = (demand, e_hat, p_pred, flags, prices, table_x, table_v, True,
            600.0, 1320.0, 264.0, 0.9, 0.0, 1.0 / 12.0, 660.0)
    t_nb, fast = timeit(lambda: kernels.controller_loop(*args))
    t_np, slow = timeit(lambda: kernels.controller_loop(*args, force_numpy=True), repeats=1)
    for a, b in zip(fast, slow):
        assert np.array_equal(a, b)
    return "controller_loop", f"{n} steps", t_nb, t_np


def bench_dp(rng, quick):
    n = 2_000 if quick else 8_760  # a year of hourly prices
    bins = 100
    params = BatteryParams(p_max=600.0, e_max=1320.0, e_min=264.0, eta=0.9, e0=660.0)
    grid, trade, deliv, feas = transition_matrices(params, 1.0, bins)
    prices = rng.uniform(0.01, 0.2, n)
    t_nb, (v1, m1) = timeit(lambda: kernels.dp_backward(prices, trade, deliv, feas, 0.0, grid))
    t_np, (v2, m2) = timeit(
        lambda: kernels.dp_backward(prices, trade, deliv, feas, 0.0, grid, force_numpy=True),
        repeats=1,
    )
    assert np.array_equal(v1, v2) and np.array_equal(m1, m2)
    return "dp_backward", f"{n} steps x {bins} bins", t_nb, t_np


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    rows = []
    for bench in (bench_quantile, bench_dp, bench_controller, bench_knn):
        rows.append(bench(rng, args.quick))

    print(f"\n{'kernel':<20} {'workload':<28} {'numba':>9} {'numpy':>9} {'speedup':>8}")
    for name, workload, t_nb, t_np in rows:
        print(f"{name:<20} {workload:<28} {t_nb:>8.3f}s {t_np:>8.3f}s {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
