"""Per-node gradient histograms and best-split search."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

GRAD, HESS, COUNT = 0, 1, 2


@numba.njit(cache=True, nogil=True)
def _histogram(bins, rows, grad, hess, n_bins):
    n_feat = bins.shape[1]
    hist = np.zeros((n_feat, n_bins, 3))
    for k in range(rows.shape[0]):
        r = rows[k]
        g = grad[r]
        h = hess[r]
        for f in range(n_feat):
            b = bins[r, f]
            hist[f, b, 0] += g
            hist[f, b, 1] += h
            hist[f, b, 2] += 1.0
    return hist


def build_histogram(bins: np.ndarray, rows: np.ndarray, grad: np.ndarray, hess: np.ndarray, n_bins: int) -> np.ndarray:
    """(n_features, n_bins, 3) sums of gradient, hessian and row count per bin.

    Rows are accumulated in the order given, so the result is reproducible.
    """
    return _histogram(bins, np.ascontiguousarray(rows, dtype=np.int64), grad, hess, n_bins)


@dataclass(frozen=True)
class Split:
    feature: int
    bin: int  # rows with bin <= this go left
    gain: float
    left_count: int
    right_count: int


def split_gains(hist: np.ndarray, n_bins: np.ndarray, lambda_l2: float, min_data_in_leaf: int) -> np.ndarray:
    """Gain of every (feature, threshold bin) candidate; infeasible ones are -inf."""
    cum = np.cumsum(hist, axis=1)
    total = cum[:, -1:, :]
    left = cum[:, :-1, :]
    right = total - left
    gl, hl, cl = left[..., GRAD], left[..., HESS], left[..., COUNT]
    gr, hr, cr = right[..., GRAD], right[..., HESS], right[..., COUNT]
    gp, hp = total[..., GRAD], total[..., HESS]
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl * gl / (hl + lambda_l2) + gr * gr / (hr + lambda_l2) - gp * gp / (hp + lambda_l2)
    valid = (cl >= min_data_in_leaf) & (cr >= min_data_in_leaf)
    valid &= np.arange(hist.shape[1] - 1)[None, :] < (np.asarray(n_bins)[:, None] - 1)
    return np.where(valid & np.isfinite(gain), gain, -np.inf)


@numba.njit(cache=True, nogil=True)
def _best_split(hist, n_bins, lambda_l2, min_data_in_leaf):
    best_gain = -np.inf
    best_f = -1
    best_b = -1
    for f in range(hist.shape[0]):
        tg = 0.0
        th = 0.0
        tc = 0.0
        for b in range(hist.shape[1]):
            tg += hist[f, b, 0]
            th += hist[f, b, 1]
            tc += hist[f, b, 2]
        parent = tg * tg / (th + lambda_l2)
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            cr = tc - cl
            if cl < min_data_in_leaf or cr < min_data_in_leaf:
                continue
            gr = tg - gl
            hr = th - hl
            gain = gl * gl / (hl + lambda_l2) + gr * gr / (hr + lambda_l2) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_f, best_b, best_gain


def find_best_split(hist, n_bins, lambda_l2: float, min_data_in_leaf: int, min_gain: float = 0.0) -> Split | None:
    """Best split by second-order gain, or None if nothing beats ``min_gain``.

    Ties go to the lower feature index, then the lower bin.
    """
    f, b, gain = _best_split(hist, np.asarray(n_bins, dtype=np.int64), float(lambda_l2), float(min_data_in_leaf))
    if f < 0 or not gain > min_gain:
        return None
    left = hist[f, : b + 1, COUNT].sum()
    return Split(int(f), int(b), float(gain), int(left), int(hist[f, :, COUNT].sum() - left))
