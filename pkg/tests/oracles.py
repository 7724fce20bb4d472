"""Independent reference implementations used only to check the package.

These deliberately avoid the package's code paths: the LP oracle models
the dispatch problem in cvxpy with the SoC variables eliminated by
cumulative sums and solves with GLPK (a different formulation through a
different modeling layer and a different simplex); the quantile, KNN, and
billing oracles are plain scalar-Python translations of the definitions.
"""

from __future__ import annotations

import numpy as np


def lp_oracle_combined(demand, prices, dt, params, kappa, cycle_cap_kwh=None):
    """Combined dispatch LP with e eliminated: returns (objective, peak)."""
    import cvxpy as cp

    T = len(demand)
    d = cp.Variable(T, nonneg=True)
    q = cp.Variable(T, nonneg=True)
    p = cp.Variable(nonneg=True)
    lower = np.tril(np.ones((T, T)))
    e = params.e0 + lower @ (params.eta * dt * q - (dt / params.eta) * d)
    cons = [
        d <= params.p_max,
        q <= params.p_max,
        e >= params.e_min,
        e <= params.e_max,
        demand - d + q <= p,
    ]
    if cycle_cap_kwh is not None:
        cons.append(cp.sum(d) * dt <= cycle_cap_kwh)
    cost = cp.sum(
        cp.multiply(params.c_deg - prices, d) * dt + cp.multiply(prices, q) * dt
    ) + kappa * p
    prob = cp.Problem(cp.Minimize(cost), cons)
    prob.solve(solver=cp.GLPK)
    if prob.status != cp.OPTIMAL:
        raise RuntimeError(f"oracle LP status {prob.status}")
    objective = prob.value + float(np.dot(prices, demand)) * dt
    return float(objective), float(p.value)


def weighted_quantile_oracle(values, weights, alpha):
    """Sort ascending, scan the cumulative weight, interpolate at alpha."""
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    sv = [float(values[i]) for i in order]
    sw = [float(weights[i]) for i in order]
    cum = 0.0
    prev = 0.0
    for k, w in enumerate(sw):
        prev = cum
        cum += w
        if cum >= alpha:
            if k == 0:
                return sv[0]
            return sv[k] + (alpha - cum) / (cum - prev) * (sv[k] - sv[k - 1])
    return sv[-1]


def knn_oracle(query, pool, k):
    """Exact scan ordered by (squared distance, pool index)."""
    d2 = [(float(((query - row) ** 2).sum()), i) for i, row in enumerate(pool)]
    d2.sort()
    return [i for _dist, i in d2[:k]]


def billed_peak_oracle(values, step_minutes, interval_minutes, consecutive):
    """Enumerate every run of adjacent metering intervals."""
    r = interval_minutes // step_minutes
    n_int = len(values) // r
    avgs = [float(np.mean(values[i * r : (i + 1) * r])) for i in range(n_int)]
    best = -np.inf
    for i in range(n_int - consecutive + 1):
        best = max(best, float(np.mean(avgs[i : i + consecutive])))
    return best
