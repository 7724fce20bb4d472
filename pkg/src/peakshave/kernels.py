"""Hot numeric kernels, each with a numba-compiled and a pure-numpy path.

The four kernels that dominate backtest runtime live here: the exact
nearest-neighbor scan, the batched weighted quantile, the sequential
real-time control loop, and the backward value-table recursion. The numba
path is used when numba imports cleanly unless the environment variable
``PEAKSHAVE_NUMBA`` is set to ``0``/``false``/``off``; the numpy path is
the reference fallback. The one exception is the neighbor search, whose
BLAS formulation beats the compiled scan at production sizes and is
therefore the default (``PEAKSHAVE_KNN=numba`` opts into the scan).
``bench/bench_kernels.py`` compares all of them.

Both paths implement identical semantics. Neighbor selection orders by
(squared distance, pool index), so exact distance ties resolve to the
earlier (older) training entry on either path; squared distances may
differ between paths in the last floating-point bits because the numpy
path uses the expanded |a|^2 + |b|^2 - 2ab form for the search phase
(winners are re-evaluated exactly).
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("PEAKSHAVE_NUMBA", "").strip().lower()
_requested = _env not in ("0", "false", "off")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

    prange = range

NUMBA_ENABLED = HAVE_NUMBA and _requested


# ---------------------------------------------------------------------------
# K-nearest-neighbor exact scan
# ---------------------------------------------------------------------------


def _knn_scan_impl(queries, pool, k, idx_out, d2_out):
    n, f = queries.shape
    m = pool.shape[0]
    for i in prange(n):
        best_d = np.full(k, np.inf)
        best_i = np.full(k, -1, np.int64)
        count = 0
        worst = np.inf
        for j in range(m):
            s = 0.0
            skip = False
            for a in range(f):
                diff = queries[i, a] - pool[j, a]
                s += diff * diff
                if s > worst:
                    skip = True
                    break
            if skip:
                continue
            if count == k and s == worst:
                continue  # boundary tie: earlier pool index stays
            p = 0
            while p < count and best_d[p] <= s:
                p += 1
            if count < k:
                t = count
                while t > p:
                    best_d[t] = best_d[t - 1]
                    best_i[t] = best_i[t - 1]
                    t -= 1
                best_d[p] = s
                best_i[p] = j
                count += 1
                if count == k:
                    worst = best_d[k - 1]
            else:
                t = k - 1
                while t > p:
                    best_d[t] = best_d[t - 1]
                    best_i[t] = best_i[t - 1]
                    t -= 1
                best_d[p] = s
                best_i[p] = j
                worst = best_d[k - 1]
        for t in range(k):
            idx_out[i, t] = best_i[t]
            d2_out[i, t] = best_d[t]


_knn_scan_numba = njit(cache=True, parallel=True)(_knn_scan_impl) if HAVE_NUMBA else None


def knn_search_numba(queries: np.ndarray, pool: np.ndarray, k: int):
    if _knn_scan_numba is None:
        raise RuntimeError("numba is not available")
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    idx = np.empty((queries.shape[0], k), np.int64)
    d2 = np.empty((queries.shape[0], k), np.float64)
    _knn_scan_numba(queries, pool, k, idx, d2)
    return idx, d2


def knn_search_numpy(queries: np.ndarray, pool: np.ndarray, k: int, chunk: int = 512):
    """Chunked BLAS distance search with tie-exact top-k selection."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    n = queries.shape[0]
    m = pool.shape[0]
    idx_out = np.empty((n, k), np.int64)
    d2_out = np.empty((n, k), np.float64)
    p_sq = np.einsum("ij,ij->i", pool, pool)
    for c0 in range(0, n, chunk):
        q = queries[c0 : c0 + chunk]
        d2 = q @ pool.T
        d2 *= -2.0
        d2 += np.einsum("ij,ij->i", q, q)[:, None]
        d2 += p_sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        if k < m:
            cand = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            cand = np.broadcast_to(np.arange(m), (q.shape[0], m)).copy()
        for r in range(q.shape[0]):
            row = d2[r]
            ci = cand[r]
            order = np.lexsort((ci, row[ci]))
            ci = ci[order]
            kth = row[ci[-1]]
            # pull in any equal-distance entries argpartition left out
            if int((row == kth).sum()) > int((row[ci] == kth).sum()):
                sel = np.flatnonzero(row <= kth)
                sel = sel[np.lexsort((sel, row[sel]))][:k]
                ci = sel
            # exact re-evaluation of the winners
            diff = q[r][None, :] - pool[ci]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((ci, exact))
            idx_out[c0 + r] = ci[order]
            d2_out[c0 + r] = exact[order]
    return idx_out, d2_out


def knn_search(queries: np.ndarray, pool: np.ndarray, k: int):
    """Exact k-nearest pool rows per query by (squared distance, index).

    Defaults to the BLAS-backed search: on year-scale pools the dgemm
    cross-products outrun the compiled scan (see bench/bench_kernels.py),
    so numba is opt-in here via PEAKSHAVE_KNN=numba rather than the
    default it is for the other kernels.
    """
    if k > pool.shape[0]:
        raise ValueError(f"k={k} exceeds pool size {pool.shape[0]}")
    if NUMBA_ENABLED and os.environ.get("PEAKSHAVE_KNN", "").strip().lower() == "numba":
        return knn_search_numba(queries, pool, k)
    return knn_search_numpy(queries, pool, k)


# ---------------------------------------------------------------------------
# Batched weighted quantile (cumulative-weight rule with interpolation)
# ---------------------------------------------------------------------------


def _weighted_quantile_impl(values, weights, alpha, out):
    n, k = values.shape
    for i in prange(n):
        order = np.empty(k, np.int64)
        for t in range(k):  # stable insertion sort by value
            v = values[i, t]
            p = t
            while p > 0 and values[i, order[p - 1]] > v:
                order[p] = order[p - 1]
                p -= 1
            order[p] = t
        cum = 0.0
        k0 = k - 1
        c_lo = 0.0
        c_hi = 1.0
        found = False
        for t in range(k):
            prev = cum
            cum += weights[i, order[t]]
            if not found and cum >= alpha:
                k0 = t
                c_lo = prev
                c_hi = cum
                found = True
        if not found:
            out[i] = values[i, order[k - 1]]  # cumulative rounding shortfall
        elif k0 == 0:
            out[i] = values[i, order[0]]
        else:
            e_hi = values[i, order[k0]]
            e_lo = values[i, order[k0 - 1]]
            out[i] = e_hi + (alpha - c_hi) / (c_hi - c_lo) * (e_hi - e_lo)


_weighted_quantile_numba = (
    njit(cache=True, parallel=True)(_weighted_quantile_impl) if HAVE_NUMBA else None
)


def weighted_quantile_numba(values, weights, alpha):
    if _weighted_quantile_numba is None:
        raise RuntimeError("numba is not available")
    out = np.empty(values.shape[0])
    _weighted_quantile_numba(
        np.ascontiguousarray(values, np.float64),
        np.ascontiguousarray(weights, np.float64),
        float(alpha),
        out,
    )
    return out


def weighted_quantile_numpy(values, weights, alpha):
    values = np.asarray(values, np.float64)
    weights = np.asarray(weights, np.float64)
    order = np.argsort(values, axis=1, kind="stable")
    sv = np.take_along_axis(values, order, axis=1)
    sw = np.take_along_axis(weights, order, axis=1)
    cum = np.cumsum(sw, axis=1)
    k0 = (cum < alpha).sum(axis=1)  # first index with cum >= alpha
    n, k = values.shape
    k0c = np.minimum(k0, k - 1)
    rows = np.arange(n)
    e_hi = sv[rows, k0c]
    c_hi = cum[rows, k0c]
    e_lo = sv[rows, np.maximum(k0c - 1, 0)]
    c_lo = np.where(k0c > 0, cum[rows, np.maximum(k0c - 1, 0)], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        interp = e_hi + (alpha - c_hi) / (c_hi - c_lo) * (e_hi - e_lo)
    out = np.where(k0c == 0, sv[:, 0], interp)
    out = np.where(k0 >= k, sv[:, -1], out)  # cumulative rounding shortfall
    return out


def weighted_quantile_batch(values, weights, alpha):
    """Per row: smallest sorted value whose cumulative weight reaches alpha,
    linearly interpolated from the previous sorted value; the first sorted
    value when alpha falls inside the first weight."""
    if NUMBA_ENABLED:
        return weighted_quantile_numba(values, weights, alpha)
    return weighted_quantile_numpy(values, weights, alpha)


# ---------------------------------------------------------------------------
# Real-time control loop (peak-shaving stage + arbitrage stage)
# ---------------------------------------------------------------------------


def _controller_loop_impl(
    demand,
    e_hat,
    p_pred,
    month_start,
    prices,
    table_x,
    table_v,
    use_table,
    p_max,
    e_max,
    e_min,
    eta,
    c_deg,
    dt,
    e0,
    d_out,
    q_out,
    e_out,
    net_out,
    p_out,
    d_ps_out,
    q_ps_out,
):
    n = demand.shape[0]
    e = e0
    p_run = 0.0
    for t in range(n):
        if month_start[t]:
            p_run = 0.0
        dem = demand[t]

        # arbitrage bids from the stored marginal-value curve
        q_arb = 0.0
        d_arb = 0.0
        if use_table:
            v_e = np.interp(e, table_x, table_v)
            price = prices[t]
            if price > v_e / eta + c_deg:
                d_arb = p_max
            elif price < v_e * eta:
                q_arb = p_max

        # Stage 1: peak shaving toward the predicted reserve and peak target
        delta_e = e_hat[t] - e
        p_t = max(p_run, p_pred[t])
        d_ps = 0.0
        q_ps = 0.0
        if dem > p_t:
            d_ps = min(max(-delta_e * eta / dt, dem - p_t), p_max, (e - e_min) * eta / dt)
        elif e < e_hat[t] and dem < p_t:
            q_ps = min(delta_e / (eta * dt), p_t - dem, p_max, (e_max - e) / (eta * dt))
        e_ps = e - (d_ps * dt) / eta + eta * (q_ps * dt)
        net_ps = dem - d_ps + q_ps
        p_next = max(p_t, net_ps)

        # Stage 2: arbitrage within the remaining headroom
        q_cap = min(p_next - dem, min(p_max, (e_max - e) / (eta * dt)))
        d_cap = min((e - e_ps) * eta / dt, p_max)
        if q_ps > 0.0:
            q = min(q_arb + q_ps, q_cap)
            d = 0.0
        elif d_ps > 0.0:
            d = min(d_arb + d_ps, max(d_cap, d_ps))  # never undo the stage-1 shave
            q = 0.0
        else:
            q = min(q_arb, q_cap)
            d = min(d_arb, d_cap)
            if q < 0.0:
                q = 0.0
            if d < 0.0:
                d = 0.0

        e_next = e - (d * dt) / eta + eta * (q * dt)
        # snap rounding residue onto the bound; larger breaches stay visible
        # for the caller's invariant check
        if e_min - 1e-9 <= e_next < e_min:
            e_next = e_min
        elif e_max < e_next <= e_max + 1e-9:
            e_next = e_max
        net = dem - d + q
        p_run = max(p_next, net)

        d_out[t] = d
        q_out[t] = q
        e_out[t] = e_next
        net_out[t] = net
        p_out[t] = p_run
        d_ps_out[t] = d_ps
        q_ps_out[t] = q_ps
        e = e_next


_controller_loop_numba = njit(cache=True)(_controller_loop_impl) if HAVE_NUMBA else None


def controller_loop(
    demand,
    e_hat,
    p_pred,
    month_start,
    prices,
    table_x,
    table_v,
    use_table,
    p_max,
    e_max,
    e_min,
    eta,
    c_deg,
    dt,
    e0,
    force_numpy: bool = False,
):
    """Run the two-stage control loop over a horizon; returns seven arrays
    (d, q, e, net, p_running, d_ps, q_ps)."""
    n = demand.shape[0]
    outs = [np.empty(n) for _ in range(7)]
    args = (
        np.ascontiguousarray(demand, np.float64),
        np.ascontiguousarray(e_hat, np.float64),
        np.ascontiguousarray(p_pred, np.float64),
        np.ascontiguousarray(month_start, np.bool_),
        np.ascontiguousarray(prices, np.float64),
        np.ascontiguousarray(table_x, np.float64),
        np.ascontiguousarray(table_v, np.float64),
        bool(use_table),
        float(p_max),
        float(e_max),
        float(e_min),
        float(eta),
        float(c_deg),
        float(dt),
        float(e0),
        *outs,
    )
    if NUMBA_ENABLED and not force_numpy:
        _controller_loop_numba(*args)
    else:
        _controller_loop_impl(*args)
    return tuple(outs)


# ---------------------------------------------------------------------------
# Backward value recursion for the arbitrage table
# ---------------------------------------------------------------------------


def _dp_backward_impl(prices, trade, deliv, feasible, c_deg, grid, v_end, marg_sum):
    n = prices.shape[0]
    b = grid.shape[0]
    v_next = v_end.copy()
    v_cur = np.empty(b)
    for t in range(n - 1, -1, -1):
        lam = prices[t]
        for i in range(b):
            best = -np.inf
            for j in range(b):
                if not feasible[i, j]:
                    continue
                r = lam * trade[i, j] - c_deg * deliv[i, j] + v_next[j]
                if r > best:
                    best = r
            v_cur[i] = best
        for i in range(b - 1):
            marg_sum[i] += (v_cur[i + 1] - v_cur[i]) / (grid[i + 1] - grid[i])
        for i in range(b):
            v_next[i] = v_cur[i]
    return v_next


_dp_backward_numba = njit(cache=True)(_dp_backward_impl) if HAVE_NUMBA else None


def _dp_backward_numpy(prices, trade, deliv, feasible, c_deg, grid, v_end, marg_sum):
    n = prices.shape[0]
    v_next = v_end.copy()
    base = -c_deg * deliv
    neg_inf = np.float64(-np.inf)
    de = grid[1:] - grid[:-1]
    for t in range(n - 1, -1, -1):
        cand = prices[t] * trade + base + v_next[None, :]
        cand = np.where(feasible, cand, neg_inf)
        v_next = cand.max(axis=1)
        marg_sum += (v_next[1:] - v_next[:-1]) / de
    return v_next


def dp_backward(prices, trade, deliv, feasible, c_deg, grid, force_numpy: bool = False):
    """Backward induction over the SoC grid with energy-denominated
    transition matrices (kWh); returns (V at t=0, horizon-averaged marginal
    value per grid segment, $/kWh)."""
    grid = np.ascontiguousarray(grid, np.float64)
    v_end = np.zeros(grid.shape[0])
    marg_sum = np.zeros(grid.shape[0] - 1)
    args = (
        np.ascontiguousarray(prices, np.float64),
        np.ascontiguousarray(trade, np.float64),
        np.ascontiguousarray(deliv, np.float64),
        np.ascontiguousarray(feasible, np.bool_),
        float(c_deg),
        grid,
        v_end,
        marg_sum,
    )
    if NUMBA_ENABLED and not force_numpy:
        v0 = _dp_backward_numba(*args)
    else:
        v0 = _dp_backward_numpy(*args)
    return v0, marg_sum / prices.shape[0]
