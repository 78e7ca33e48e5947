"""Trained tree ensembles: prediction and the JSON model file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import DecodeError, ValidationError
from .binning import LOG_EPS, inverse_transform
from .losses import MSE, PINBALL

MODEL_FORMAT = "airgrid-gbdt"
MODEL_VERSION = 1
LOG_TRANSFORM = "LogPlusEps"
IDENTITY = "Identity"


@dataclass
class Tree:
    """Binary regression tree.

    Child pointers >= 0 index internal nodes; a negative pointer ``c`` is
    leaf ``~c``. Node 0 is the root.
    """

    feature: np.ndarray
    threshold_bin: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray
    default_left: np.ndarray = None

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int32)
        self.threshold_bin = np.asarray(self.threshold_bin, dtype=np.int32)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int32)
        self.right = np.asarray(self.right, dtype=np.int32)
        self.leaf_value = np.asarray(self.leaf_value, dtype=np.float64)
        if self.default_left is None:
            self.default_left = np.ones(self.feature.size, dtype=bool)
        self.default_left = np.asarray(self.default_left, dtype=bool)

    @property
    def n_leaves(self) -> int:
        return self.leaf_value.size

    @property
    def root(self) -> int:
        return 0 if self.feature.size else ~0

    def leaf_index_binned(self, bins: np.ndarray) -> np.ndarray:
        """Leaf reached by each row of a binned matrix."""
        node = np.full(bins.shape[0], self.root, dtype=np.int64)
        active = np.flatnonzero(node >= 0)
        while active.size:
            nd = node[active]
            go_left = bins[active, self.feature[nd]] <= self.threshold_bin[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[node[active] >= 0]
        return ~node


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    base_score: float
    learning_rate: float
    bin_boundaries: list[np.ndarray]
    loss: str = MSE
    quantile: float | None = None
    transform: str = LOG_TRANSFORM
    best_iteration: int | None = None
    pollutant: str = ""
    params: dict = field(default_factory=dict)
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.best_iteration is None:
            self.best_iteration = len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.bin_boundaries)

    def packed(self):
        """Flatten the first ``best_iteration`` trees into kernel arrays (cached)."""
        key = (self.best_iteration, len(self.trees))
        cache = getattr(self, "_packed", None)
        if cache is not None and cache[0] == key:
            return cache[1]
        trees = self.trees[: self.best_iteration]
        roots, feat, thr, dleft, left, right, leaf = [], [], [], [], [], [], []
        n_nodes = n_leaves = 0
        for t in trees:
            def remap(c):
                c = c.astype(np.int64)
                return np.where(c >= 0, c + n_nodes, ~(~c + n_leaves))
            roots.append(0 + n_nodes if t.feature.size else ~n_leaves)
            feat.append(t.feature.astype(np.int64))
            thr.append(t.threshold)
            dleft.append(t.default_left)
            left.append(remap(t.left))
            right.append(remap(t.right))
            leaf.append(t.leaf_value)
            n_nodes += t.feature.size
            n_leaves += t.leaf_value.size

        def cat(parts, dtype):
            return np.ascontiguousarray(np.concatenate(parts) if parts else np.empty(0), dtype=dtype)

        arrays = (
            np.asarray(roots, dtype=np.int64), cat(feat, np.int64), cat(thr, np.float64),
            cat(dleft, np.bool_), cat(left, np.int64), cat(right, np.int64), cat(leaf, np.float64),
        )
        self._packed = (key, arrays)
        return arrays

    def predict_raw(self, X) -> np.ndarray:
        """Score in transformed space: base + sum of learning_rate * leaf."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValidationError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if np.isnan(X).any():
            raise ValidationError("feature vector contains NaN")
        out = np.empty(X.shape[0])
        _predict_kernel(X, *self.packed(), self.base_score, self.learning_rate, out)
        return out

    def predict(self, X) -> np.ndarray:
        """Concentrations (>= 0) for a matrix of feature rows."""
        raw = self.predict_raw(X)
        if self.transform == LOG_TRANSFORM:
            return inverse_transform(raw)
        return np.maximum(raw, 0.0)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "pollutant": self.pollutant,
            "loss": {"kind": self.loss, "quantile": self.quantile},
            "transform": {"kind": self.transform, "eps": LOG_EPS if self.transform == LOG_TRANSFORM else 0.0},
            "params": self.params,
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "best_iteration": int(self.best_iteration),
            "bin_boundaries": [[float(x) for x in e] for e in self.bin_boundaries],
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold_bin": t.threshold_bin.tolist(),
                    "threshold": [float(x) for x in t.threshold],
                    "default_left": t.default_left.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "leaf_value": [float(x) for x in t.leaf_value],
                }
                for t in self.trees
            ],
            "train_loss": [float(x) for x in self.train_loss],
            "valid_loss": [float(x) for x in self.valid_loss],
        }


@numba.njit(cache=True, nogil=True)
def _predict_kernel(X, roots, feat, thr, dleft, left, right, leaf, base, lr, out):
    for i in range(X.shape[0]):
        acc = base
        for t in range(roots.shape[0]):
            node = roots[t]
            while node >= 0:
                v = X[i, feat[node]]
                if v <= thr[node] or (v != v and dleft[node]):
                    node = left[node]
                else:
                    node = right[node]
            acc += lr * leaf[~node]
        out[i] = acc


def predict(e: TreeEnsemble, f) -> float:
    """Concentration for a single feature vector."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise ValidationError("predict expects one feature vector")
    return float(e.predict(f[None, :])[0])


def serialize(e: TreeEnsemble) -> bytes:
    return json.dumps(e.to_dict(), separators=(",", ":"), allow_nan=False).encode("utf-8")


def deserialize(payload: bytes) -> TreeEnsemble:
    try:
        d = json.loads(payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"corrupt model payload: {exc}") from None
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise DecodeError("not an airgrid model file")
    if d.get("version") != MODEL_VERSION:
        raise DecodeError(f"unsupported model version {d.get('version')!r}")
    try:
        edges = [np.asarray(e, dtype=np.float64) for e in d["bin_boundaries"]]
        n_feat = len(edges)
        trees = []
        for td in d["trees"]:
            t = Tree(td["feature"], td["threshold_bin"], td["threshold"], td["left"], td["right"],
                     td["leaf_value"], td["default_left"])
            _check_tree(t, n_feat)
            trees.append(t)
        loss = d["loss"]["kind"]
        if loss not in (MSE, PINBALL) or d["transform"]["kind"] not in (LOG_TRANSFORM, IDENTITY):
            raise DecodeError("unknown loss or transform")
        return TreeEnsemble(
            trees=trees, base_score=float(d["base_score"]), learning_rate=float(d["learning_rate"]),
            bin_boundaries=edges, loss=loss, quantile=d["loss"]["quantile"],
            transform=d["transform"]["kind"], best_iteration=int(d["best_iteration"]),
            pollutant=d.get("pollutant", ""), params=d.get("params", {}),
            train_loss=list(d.get("train_loss", [])), valid_loss=list(d.get("valid_loss", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed model payload: {exc}") from None


def _check_tree(t: Tree, n_feat: int) -> None:
    n = t.feature.size
    sizes = {t.threshold_bin.size, t.threshold.size, t.left.size, t.right.size, t.default_left.size}
    if sizes != {n} or t.leaf_value.size != n + 1:
        raise DecodeError("inconsistent tree array lengths")
    if n and (t.feature.min() < 0 or t.feature.max() >= n_feat):
        raise DecodeError("tree references an unknown feature")
    for c in (t.left, t.right):
        if n and (c.max() >= n or (~c[c < 0]).max(initial=0) >= t.leaf_value.size):
            raise DecodeError("tree child pointer out of range")


def save_model(path, e: TreeEnsemble) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(e))


def load_model(path) -> TreeEnsemble:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
