"""Randomised hyper-parameter search selected on hold-out validation loss."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .gbdt import MAX_BINS, MSE, TrainParams


@dataclass(frozen=True)
class SearchSpace:
    num_leaves: tuple[int, int] = (1000, 4095)
    min_data_in_leaf: tuple[int, int] = (20, 200)
    lambda_l2: tuple[float, float] = (1e-3, 10.0)
    # held fixed during the search
    max_bin: int = MAX_BINS
    early_stopping_rounds: int = 10
    loss: str = MSE

    def __post_init__(self):
        for name in ("num_leaves", "min_data_in_leaf", "lambda_l2"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValidationError(f"{name} range [{lo}, {hi}] is empty")
        if not 0 < self.lambda_l2[0]:
            raise ValidationError("lambda_l2 range must be positive for log-uniform sampling")
        if self.max_bin != MAX_BINS:
            raise ValidationError(f"max_bin is fixed at {MAX_BINS}")


def sample_param_sets(space: SearchSpace, n: int = 5, seed: int = 0, base: TrainParams | None = None) -> list[TrainParams]:
    """Draw n independent candidates; integers uniform, lambda_l2 log-uniform."""
    if n < 1:
        raise ValidationError("need at least one candidate")
    base = base or TrainParams()
    rng = np.random.default_rng(seed)
    log_lo, log_hi = math.log(space.lambda_l2[0]), math.log(space.lambda_l2[1])
    out = []
    for _ in range(n):
        leaves = int(rng.integers(space.num_leaves[0], space.num_leaves[1], endpoint=True))
        min_data = int(rng.integers(space.min_data_in_leaf[0], space.min_data_in_leaf[1], endpoint=True))
        lam = float(np.exp(rng.uniform(log_lo, log_hi))) if log_hi > log_lo else space.lambda_l2[0]
        out.append(replace(base, num_leaves=leaves, min_data_in_leaf=min_data, lambda_l2=lam,
                           early_stopping_rounds=space.early_stopping_rounds, loss=space.loss, quantile=None))
    return out


def select_best(results) -> TrainParams:
    """Parameters with the lowest validation MSE; the earliest wins ties."""
    results = list(results)
    if not results:
        raise ValidationError("no tuning results")
    for _, mse in results:
        if not math.isfinite(mse):
            raise ValidationError(f"validation MSE {mse} is not finite")
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    return results[best][0]


def write_tuning_report(path, results, selected: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate_idx", "num_leaves", "min_data_in_leaf", "lambda_l2", "val_mse", "selected"])
        for i, (p, mse) in enumerate(results):
            w.writerow([i, p.num_leaves, p.min_data_in_leaf, repr(p.lambda_l2), repr(mse), int(i == selected)])
