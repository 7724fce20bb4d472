"""Gaussian-kernel KNN prediction of SoC reserve and daily peak targets.

Training entries pair a sliding demand window (raw kW) plus the window
endpoint's daily sine/cosine phase with the hindsight targets for that
endpoint: the optimal end-of-step SoC reserve and the next step's daily
peak target. Queries search only the pool of the query's season (summer
vs non-summer), weight the K nearest entries with a Gaussian kernel
normalized by window length, and produce:

* the SoC reserve as the alpha-confidence weighted quantile of neighbor
  reserves (sorted ascending, first cumulative weight reaching alpha,
  linearly interpolated; clamped to the smallest neighbor below the first
  weight), and
* the peak target as the plain weighted average of neighbor peaks.

Distances are Euclidean on the raw feature vectors; sigma is therefore in
kW. Neighbor ranking ties resolve to the chronologically earlier entry.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from . import kernels
from .hindsight import HindsightTargets
from .series import CalendarFeatures, DemandSeries, Season, calendar_features

MODEL_FORMAT_VERSION = 1


class KernelError(ValueError):
    """Bad kernel configuration or insufficient training data."""


@dataclass(frozen=True)
class KernelConfig:
    """lookback: window length W in steps; sigma: kernel bandwidth (kW);
    k: neighbor count; alpha: reserve confidence level in (0, 1)."""

    lookback: int
    sigma: float
    k: int
    alpha: float

    def __post_init__(self):
        if self.lookback < 1:
            raise KernelError(f"lookback must be >= 1, got {self.lookback}")
        if self.sigma <= 0:
            raise KernelError(f"sigma must be > 0, got {self.sigma}")
        if self.k < 1:
            raise KernelError(f"k must be >= 1, got {self.k}")
        if not 0 < self.alpha < 1:
            raise KernelError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class SeasonPool:
    """Chronologically ordered training entries of one season."""

    features: np.ndarray  # (n, W + 2)
    target_e: np.ndarray  # kWh
    target_p: np.ndarray  # kW
    endpoints: np.ndarray  # endpoint index into the source history

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class TrainingSet:
    lookback: int
    step_minutes: int
    pools: dict[Season, SeasonPool]
    history_tail: np.ndarray  # last W-1 demand values before the set's end
    history_end: "object"  # datetime: exclusive end of the source history

    def pool(self, season: Season) -> SeasonPool:
        return self.pools[season]


def window_features(
    demand: np.ndarray, cal: CalendarFeatures, lookback: int, endpoints: np.ndarray
) -> np.ndarray:
    """Feature rows [D_{s-W+1..s}, t_sin_s, t_cos_s] for given endpoints."""
    w = lookback
    windows = np.lib.stride_tricks.sliding_window_view(demand, w)
    feats = np.empty((endpoints.size, w + 2))
    feats[:, :w] = windows[endpoints - (w - 1)]
    feats[:, w] = cal.t_sin[endpoints]
    feats[:, w + 1] = cal.t_cos[endpoints]
    return feats


def build_training_set(
    demand_hist: DemandSeries, targets: HindsightTargets, lookback: int
) -> TrainingSet:
    """One entry per window endpoint s in [W-1, N-2] (0-based): the feature
    is the window through s, the targets are the end-of-step-s reserve and
    the step-s+1 daily peak target; entries are labeled by the endpoint's
    season."""
    n = len(demand_hist)
    if len(targets) != n:
        raise KernelError("targets length does not match the demand history")
    if n <= lookback:
        raise KernelError(f"need more than lookback={lookback} steps, got {n}")
    endpoints = np.arange(lookback - 1, n - 1)
    cal = calendar_features(demand_hist)
    feats = window_features(demand_hist.values, cal, lookback, endpoints)
    target_e = targets.e_hist[endpoints]
    target_p = targets.p_hist[endpoints + 1]
    summer = demand_hist.season_mask()[endpoints]

    pools = {}
    for season, mask in ((Season.SUMMER, summer), (Season.NONSUMMER, ~summer)):
        pools[season] = SeasonPool(
            features=np.ascontiguousarray(feats[mask]),
            target_e=target_e[mask].copy(),
            target_p=target_p[mask].copy(),
            endpoints=endpoints[mask].copy(),
        )
    return TrainingSet(
        lookback=lookback,
        step_minutes=demand_hist.step_minutes,
        pools=pools,
        history_tail=demand_hist.values[-(lookback - 1) :].copy() if lookback > 1 else np.empty(0),
        history_end=demand_hist.end,
    )


@dataclass(frozen=True)
class NeighborSet:
    """K nearest training entries with normalized Gaussian weights."""

    indices: np.ndarray  # positions within the season pool
    sq_distances: np.ndarray
    weights: np.ndarray
    target_e: np.ndarray
    target_p: np.ndarray


def gaussian_weights(sq_distances: np.ndarray, lookback: int, sigma: float) -> np.ndarray:
    """exp(-d^2 / (2*W*sigma^2)) normalized to sum 1 along the last axis.

    The smallest distance is factored out before exponentiation; the
    normalized weights are unchanged and cannot all underflow to zero.
    """
    z = sq_distances / (2.0 * lookback * sigma * sigma)
    z = z - z.min(axis=-1, keepdims=True)
    w = np.exp(-z)
    return w / w.sum(axis=-1, keepdims=True)


def knn_query(
    feature: np.ndarray, season: Season, training: TrainingSet, config: KernelConfig
) -> NeighborSet:
    """Exact K-nearest neighbors of one feature vector in its season pool."""
    pool = training.pool(season)
    if len(pool) < config.k:
        raise KernelError(
            f"{season.value} pool has {len(pool)} entries, fewer than k={config.k}"
        )
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (training.lookback + 2,):
        raise KernelError(
            f"feature must have length lookback+2={training.lookback + 2}, "
            f"got {feature.shape}"
        )
    idx, d2 = kernels.knn_search(feature[None, :], pool.features, config.k)
    idx, d2 = idx[0], d2[0]
    return NeighborSet(
        indices=idx,
        sq_distances=d2,
        weights=gaussian_weights(d2, training.lookback, config.sigma),
        target_e=pool.target_e[idx],
        target_p=pool.target_p[idx],
    )


def predict_soc_reserve(neighbors: NeighborSet, alpha: float) -> float:
    """Alpha-confidence weighted quantile of the neighbor SoC reserves."""
    return float(
        kernels.weighted_quantile_batch(
            neighbors.target_e[None, :], neighbors.weights[None, :], alpha
        )[0]
    )


def predict_peak_target(neighbors: NeighborSet) -> float:
    """Weighted average of the neighbor daily peak targets."""
    return float(np.dot(neighbors.weights, neighbors.target_p))


def predict_batch(
    features: np.ndarray,
    summer_mask: np.ndarray,
    training: TrainingSet,
    config: KernelConfig,
):
    """Predict (e_hat, p_pred) for a batch of query features.

    Returns per-query reserves and peak targets plus the per-season
    neighbor indices and weights so battery-size sweeps can re-target the
    same neighbors without re-running the search.
    """
    n = features.shape[0]
    e_hat = np.empty(n)
    p_pred = np.empty(n)
    neighbor_info = {}
    for season, mask in (
        (Season.SUMMER, summer_mask),
        (Season.NONSUMMER, ~summer_mask),
    ):
        if not mask.any():
            continue
        pool = training.pool(season)
        if len(pool) < config.k:
            raise KernelError(
                f"{season.value} pool has {len(pool)} entries, fewer than k={config.k}"
            )
        idx, d2 = kernels.knn_search(
            np.ascontiguousarray(features[mask]), pool.features, config.k
        )
        w = gaussian_weights(d2, training.lookback, config.sigma)
        e_hat[mask] = kernels.weighted_quantile_batch(pool.target_e[idx], w, config.alpha)
        p_pred[mask] = np.einsum("ij,ij->i", w, pool.target_p[idx])
        neighbor_info[season] = (idx, w)
    return e_hat, p_pred, neighbor_info


def retarget_predictions(
    neighbor_info: dict,
    summer_mask: np.ndarray,
    training: TrainingSet,
    config: KernelConfig,
):
    """Recompute (e_hat, p_pred) from cached neighbors against a training
    set that shares the original's features/endpoints but carries different
    targets (e.g. another battery size)."""
    n = summer_mask.shape[0]
    e_hat = np.empty(n)
    p_pred = np.empty(n)
    for season, (idx, w) in neighbor_info.items():
        mask = summer_mask if season is Season.SUMMER else ~summer_mask
        pool = training.pool(season)
        e_hat[mask] = kernels.weighted_quantile_batch(pool.target_e[idx], w, config.alpha)
        p_pred[mask] = np.einsum("ij,ij->i", w, pool.target_p[idx])
    return e_hat, p_pred


# ---------------------------------------------------------------------------
# Model artifact
# ---------------------------------------------------------------------------


def save_model(path, training: TrainingSet, config: KernelConfig) -> None:
    """Persist the training pools and kernel configuration (npz container)."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "lookback": training.lookback,
        "step_minutes": training.step_minutes,
        "history_end": training.history_end.isoformat(),
        "sigma": config.sigma,
        "k": config.k,
        "alpha": config.alpha,
    }
    arrays = {"history_tail": training.history_tail}
    for season, pool in training.pools.items():
        tag = season.value
        arrays[f"{tag}_features"] = pool.features
        arrays[f"{tag}_target_e"] = pool.target_e
        arrays[f"{tag}_target_p"] = pool.target_p
        arrays[f"{tag}_endpoints"] = pool.endpoints
    buf = io.BytesIO()
    np.savez_compressed(buf, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    d = os.path.dirname(os.path.abspath(os.fspath(path)))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-model-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> tuple[TrainingSet, KernelConfig]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise KernelError(
                f"unsupported model format version {meta.get('format_version')}"
            )
        pools = {}
        for season in Season:
            tag = season.value
            pools[season] = SeasonPool(
                features=data[f"{tag}_features"],
                target_e=data[f"{tag}_target_e"],
                target_p=data[f"{tag}_target_p"],
                endpoints=data[f"{tag}_endpoints"],
            )
        training = TrainingSet(
            lookback=int(meta["lookback"]),
            step_minutes=int(meta["step_minutes"]),
            pools=pools,
            history_tail=data["history_tail"],
            history_end=datetime.fromisoformat(meta["history_end"]),
        )
    config = KernelConfig(
        lookback=int(meta["lookback"]),
        sigma=float(meta["sigma"]),
        k=int(meta["k"]),
        alpha=float(meta["alpha"]),
    )
    return training, config
