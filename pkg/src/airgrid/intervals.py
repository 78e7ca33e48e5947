"""Quantile-triplet prediction intervals and interval-size placement ranking."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gbdt import PINBALL, BinnedDataset, TrainParams, TreeEnsemble, train

QUANTILES = (0.05, 0.5, 0.95)


@dataclass
class QuantileTriplet:
    q05: TreeEnsemble
    q50: TreeEnsemble
    q95: TreeEnsemble

    def __post_init__(self):
        models = self.models()
        if len({m.n_features for m in models}) != 1 or len({m.pollutant for m in models}) != 1:
            raise ValidationError("triplet members must share feature schema and pollutant")

    def models(self) -> tuple[TreeEnsemble, TreeEnsemble, TreeEnsemble]:
        return self.q05, self.q50, self.q95


@dataclass(frozen=True)
class IntervalPrediction:
    lo: float
    mid: float
    hi: float


def train_triplet(params: TrainParams, train_set: BinnedDataset, valid_set: BinnedDataset | None = None,
                  pollutant: str = "") -> QuantileTriplet:
    """Three pinball-loss models at the 5th, 50th and 95th percentiles, otherwise identical."""
    models = [train(params.with_loss(PINBALL, q), train_set, valid_set, pollutant=pollutant) for q in QUANTILES]
    return QuantileTriplet(*models)


def predict_intervals(t: QuantileTriplet, X) -> np.ndarray:
    """(n, 3) array of lo <= mid <= hi; raw quantile outputs are sorted to repair crossing."""
    raw = np.stack([m.predict(X) for m in t.models()], axis=-1)
    return np.sort(raw, axis=-1)


def predict_interval(t: QuantileTriplet, f) -> IntervalPrediction:
    f = np.asarray(f, dtype=np.float64)
    lo, mid, hi = predict_intervals(t, f[None, :])[0]
    return IntervalPrediction(float(lo), float(mid), float(hi))


def coverage(obs, bounds: np.ndarray) -> float:
    obs = np.asarray(obs, dtype=np.float64)
    return float(np.mean((obs >= bounds[:, 0]) & (obs <= bounds[:, 2])))


@dataclass
class PlacementRanking:
    lat: np.ndarray
    lon: np.ndarray
    interval_size_sum: np.ndarray

    def top(self, k: int = 100) -> "PlacementRanking":
        return PlacementRanking(self.lat[:k], self.lon[:k], self.interval_size_sum[:k])

    def write_csv(self, path, k: int | None = 100) -> None:
        r = self if k is None else self.top(k)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "lat", "lon", "interval_size_sum"])
            for i in range(r.lat.size):
                w.writerow([i + 1, repr(float(r.lat[i])), repr(float(r.lon[i])), repr(float(r.interval_size_sum[i]))])


def interval_size_sum(tiles) -> PlacementRanking:
    """Rank cells by the summed interval width (hi - lo) over all supplied hours.

    ``tiles`` is a sequence of (lo_tile, hi_tile) pairs. Cells missing in any
    hour are left out. Ties order by latitude then longitude, ascending.
    """
    # canonical time order keeps the float sum independent of input order
    tiles = sorted(tiles, key=lambda pair: pair[0].timestamp)
    if not tiles:
        raise ValidationError("no tiles supplied")
    spec = tiles[0][0].spec
    total = np.zeros(spec.n_cells)
    bad = np.zeros(spec.n_cells, dtype=bool)
    for lo, hi in tiles:
        if lo.spec != spec or hi.spec != spec:
            raise ValidationError("tiles do not share grid geometry")
        if lo.timestamp != hi.timestamp:
            raise ValidationError("lo/hi tiles must be paired per timestamp")
        bad |= (lo.values == lo.missing) | (hi.values == hi.missing)
        total += hi.values.astype(np.float64) - lo.values.astype(np.float64)
    lat, lon = spec.cell_centers()
    keep = np.flatnonzero(~bad)
    order = np.lexsort((lon[keep], lat[keep], -total[keep]))
    idx = keep[order]
    return PlacementRanking(lat[idx], lon[idx], total[idx])
