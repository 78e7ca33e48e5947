"""Target transform and quantile feature binning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

LOG_EPS = 1e-7
MAX_BINS = 63


def transform_target(y):
    """ln(y + 1e-7); concentrations must be non-negative."""
    arr = np.asarray(y, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValidationError("concentrations must be >= 0")
    z = np.log(arr + LOG_EPS)
    return float(z) if z.ndim == 0 else z


def inverse_transform(z):
    """exp(z) - 1e-7, floored at zero."""
    out = np.maximum(0.0, np.exp(np.asarray(z, dtype=np.float64)) - LOG_EPS)
    return float(out) if out.ndim == 0 else out


def _feature_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    vals, counts = np.unique(col, return_counts=True)
    if vals.size <= 1:
        return np.empty(0)
    if vals.size <= max_bins:
        lo, hi = vals[:-1], vals[1:]
    else:
        cum = np.cumsum(counts)
        targets = col.size * np.arange(1, max_bins) / max_bins
        pos = np.unique(np.searchsorted(cum, targets, side="left"))
        pos = pos[pos < vals.size - 1]
        lo, hi = vals[pos], vals[pos + 1]
    mid = lo + (hi - lo) / 2
    # adjacent floats: the midpoint may round up onto the next value
    return np.where(mid < hi, mid, lo)


def bin_features(X, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    """Per-feature upper bin edges (finite, strictly increasing).

    A feature with k edges has k + 1 bins; value x lands in bin
    ``searchsorted(edges, x, 'left')``, so bin <= t exactly when x <= edges[t].
    Features with at most ``max_bins`` distinct values get one bin per value,
    others equal-frequency bins.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("need a non-empty 2-d feature matrix")
    if not 2 <= max_bins <= 255:
        raise ValidationError("max_bins must be in [2, 255]")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")
    return [_feature_edges(X[:, f], max_bins) for f in range(X.shape[1])]


def apply_bins(X, edges: list[np.ndarray]) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(edges):
        raise ValidationError(f"expected {len(edges)} features, got {X.shape[1]}")
    out = np.empty(X.shape, dtype=np.uint8)
    for f, e in enumerate(edges):
        out[:, f] = np.searchsorted(e, X[:, f], side="left")
    return out


@dataclass
class BinnedDataset:
    bins: np.ndarray
    edges: list[np.ndarray]
    target: np.ndarray

    def __post_init__(self):
        self.bins = np.ascontiguousarray(self.bins, dtype=np.uint8)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.bins.shape[0] != self.target.size:
            raise ValidationError("bins and target lengths differ")

    @property
    def n_rows(self) -> int:
        return self.target.size

    @property
    def n_features(self) -> int:
        return self.bins.shape[1]

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    @classmethod
    def from_matrix(cls, X, target, max_bins: int = MAX_BINS) -> "BinnedDataset":
        edges = bin_features(X, max_bins)
        return cls(apply_bins(X, edges), edges, target)

    def like(self, X, target) -> "BinnedDataset":
        """Bin another matrix with these boundaries (validation / test sets)."""
        return BinnedDataset(apply_bins(X, self.edges), self.edges, target)
