"""Histogram gradient-boosted regression trees."""
from __future__ import annotations

import numpy as np

from .binning import LOG_EPS, MAX_BINS, BinnedDataset, apply_bins, bin_features, inverse_transform, transform_target
from .booster import TrainParams, grow_tree, train
from .ensemble import (
    IDENTITY,
    LOG_TRANSFORM,
    Tree,
    TreeEnsemble,
    deserialize,
    load_model,
    predict,
    save_model,
    serialize,
)
from .goss import goss_sample
from .losses import MSE, PINBALL, loss_grad_hess, loss_value
from .split import build_histogram, find_best_split

__all__ = [
    "LOG_EPS", "MAX_BINS", "BinnedDataset", "apply_bins", "bin_features", "inverse_transform",
    "transform_target", "TrainParams", "grow_tree", "train", "IDENTITY", "LOG_TRANSFORM", "Tree",
    "TreeEnsemble", "deserialize", "load_model", "predict", "save_model", "serialize", "goss_sample",
    "MSE", "PINBALL", "loss_grad_hess", "loss_value", "build_histogram", "find_best_split",
    "model_space", "fit",
]


def model_space(y, transform: str = LOG_TRANSFORM) -> np.ndarray:
    """Concentrations -> the space trees are fitted in."""
    y = np.asarray(y, dtype=np.float64)
    return transform_target(y) if transform == LOG_TRANSFORM else y


def fit(params: TrainParams, X_train, y_train, X_valid=None, y_valid=None,
        pollutant: str = "", max_bins: int = MAX_BINS) -> TreeEnsemble:
    """Bin raw features, transform concentrations and train one ensemble."""
    train_set = BinnedDataset.from_matrix(X_train, model_space(y_train, params.transform), max_bins)
    valid_set = None
    if X_valid is not None and len(y_valid):
        valid_set = train_set.like(X_valid, model_space(y_valid, params.transform))
    return train(params, train_set, valid_set, pollutant=pollutant)
