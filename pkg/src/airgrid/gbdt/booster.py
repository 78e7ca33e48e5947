"""Leaf-wise histogram gradient boosting with one-side sampling."""
from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ValidationError
from .binning import BinnedDataset
from .ensemble import IDENTITY, LOG_TRANSFORM, Tree, TreeEnsemble
from .goss import goss_sample
from .losses import MSE, PINBALL, check_loss, initial_score, loss_grad_hess, loss_value
from .split import build_histogram, find_best_split

MAX_LEAVES = 4095


@dataclass(frozen=True)
class TrainParams:
    num_leaves: int = 31
    min_data_in_leaf: int = 20
    lambda_l2: float = 0.0
    learning_rate: float = 0.1
    max_trees: int = 1000
    early_stopping_rounds: int = 10
    goss_top_rate: float = 0.2
    goss_other_rate: float = 0.1
    loss: str = MSE
    quantile: float | None = None
    seed: int = 0
    min_gain_to_split: float = 1e-6
    transform: str = LOG_TRANSFORM

    def __post_init__(self):
        problems = []
        if not 2 <= self.num_leaves <= MAX_LEAVES:
            problems.append(f"num_leaves must be in [2, {MAX_LEAVES}]")
        if self.min_data_in_leaf < 1:
            problems.append("min_data_in_leaf must be >= 1")
        if not self.lambda_l2 >= 0:
            problems.append("lambda_l2 must be >= 0")
        if not 0 < self.learning_rate <= 1:
            problems.append("learning_rate must be in (0, 1]")
        if self.max_trees < 0:
            problems.append("max_trees must be >= 0")
        if self.early_stopping_rounds < 1:
            problems.append("early_stopping_rounds must be >= 1")
        a, b = self.goss_top_rate, self.goss_other_rate
        if not (0 <= a <= 1 and 0 <= b <= 1) or a + b > 1 + 1e-12 or a + b == 0:
            problems.append("GOSS rates need 0 <= a, b, 0 < a + b <= 1")
        if self.transform not in (LOG_TRANSFORM, IDENTITY):
            problems.append(f"unknown transform {self.transform!r}")
        try:
            check_loss(self.loss, self.quantile)
        except ValidationError as exc:
            problems.append(str(exc))
        if problems:
            raise ValidationError("; ".join(problems))

    def with_loss(self, loss: str, quantile: float | None = None) -> "TrainParams":
        d = asdict(self)
        d.update(loss=loss, quantile=quantile)
        return TrainParams(**d)


class _Leaf:
    __slots__ = ("rows", "all_rows", "hist", "split", "parent", "is_left")

    def __init__(self, rows, all_rows, hist, parent, is_left):
        self.rows = rows
        self.all_rows = all_rows
        self.hist = hist
        self.parent = parent
        self.is_left = is_left
        self.split = None


def _leaf_step(params: TrainParams, g: np.ndarray, residual: np.ndarray) -> float:
    """Leaf output for one round, already scaled by the learning rate.

    Squared loss takes the Newton step -G/(H + lambda). Pinball loss renews
    the leaf to the q-quantile of its residuals (the exact minimiser), shrunk
    by n/(n + lambda); any step in [0, minimiser] cannot raise the convex
    pinball loss, so training loss never increases.
    """
    if params.loss == PINBALL:
        m = float(np.quantile(residual, params.quantile, method="inverted_cdf"))
        return params.learning_rate * m * residual.size / (residual.size + params.lambda_l2)
    return params.learning_rate * (-g.sum() / (g.size + params.lambda_l2))


def grow_tree(data: BinnedDataset, rows, weights, grad, hess, params: TrainParams, n_bins=None):
    """Grow one tree best-first on the sampled ``rows``.

    Returns the tree structure (leaf values unset) and the list of all-row
    index arrays per leaf, or None if the root cannot be split.
    """
    n_bins = data.n_bins if n_bins is None else n_bins
    width = int(n_bins.max())
    gw = np.zeros(data.n_rows)
    hw = np.zeros(data.n_rows)
    gw[rows] = grad[rows] * weights
    hw[rows] = hess[rows] * weights

    def evaluate(leaf):
        leaf.split = find_best_split(leaf.hist, n_bins, params.lambda_l2, params.min_data_in_leaf,
                                     params.min_gain_to_split)

    root = _Leaf(rows, np.arange(data.n_rows), build_histogram(data.bins, rows, gw, hw, width), None, False)
    evaluate(root)
    if root.split is None:
        return None

    leaves = [root]
    feature, tbin, thresh, left, right = [], [], [], [], []
    heap = [(-root.split.gain, 0)]
    while heap and len(leaves) < params.num_leaves:
        _, lid = heapq.heappop(heap)
        leaf = leaves[lid]
        s = leaf.split
        node = len(feature)
        feature.append(s.feature)
        tbin.append(s.bin)
        thresh.append(float(data.edges[s.feature][s.bin]))
        new_id = len(leaves)
        left.append(~lid)
        right.append(~new_id)
        if leaf.parent is not None:
            (left if leaf.is_left else right)[leaf.parent] = node

        col = data.bins[leaf.rows, s.feature]
        l_rows, r_rows = leaf.rows[col <= s.bin], leaf.rows[col > s.bin]
        col_all = data.bins[leaf.all_rows, s.feature]
        l_all, r_all = leaf.all_rows[col_all <= s.bin], leaf.all_rows[col_all > s.bin]
        # build the smaller child directly, derive the sibling by subtraction
        if l_rows.size <= r_rows.size:
            l_hist = build_histogram(data.bins, l_rows, gw, hw, width)
            r_hist = leaf.hist - l_hist
        else:
            r_hist = build_histogram(data.bins, r_rows, gw, hw, width)
            l_hist = leaf.hist - r_hist
        lchild = _Leaf(l_rows, l_all, l_hist, node, True)
        rchild = _Leaf(r_rows, r_all, r_hist, node, False)
        leaves[lid] = lchild
        leaves.append(rchild)
        for i, child in ((lid, lchild), (new_id, rchild)):
            evaluate(child)
            if child.split is not None:
                heapq.heappush(heap, (-child.split.gain, i))
        leaf.hist = None

    tree = Tree(feature, tbin, thresh, left, right, np.zeros(len(leaves)))
    return tree, [lf.all_rows for lf in leaves]


def train(params: TrainParams, train_set: BinnedDataset, valid_set: BinnedDataset | None = None,
          pollutant: str = "") -> TreeEnsemble:
    """Boost trees until validation loss stalls for ``early_stopping_rounds`` rounds.

    Targets in the binned sets are already in model space (see
    ``transform_target``). Without a validation set all ``max_trees`` rounds
    run unless a tree cannot split.
    """
    if train_set.n_rows == 0:
        raise ValidationError("empty training set")
    if valid_set is not None and [e.tolist() for e in valid_set.edges] != [e.tolist() for e in train_set.edges]:
        raise ValidationError("training and validation sets must share bin boundaries")
    y = train_set.target
    q = params.quantile
    base = initial_score(params.loss, y, q)
    pred = np.full(y.size, base)
    vpred = np.full(valid_set.n_rows, base) if valid_set is not None else None
    n_bins = train_set.n_bins

    trees: list[Tree] = []
    train_hist = [loss_value(params.loss, y, pred, q)]
    valid_hist = [loss_value(params.loss, valid_set.target, vpred, q)] if valid_set is not None else []
    best_iter, best_val = 0, valid_hist[0] if valid_hist else np.inf

    for it in range(params.max_trees):
        grad, hess = loss_grad_hess(params.loss, y, pred, q)
        rows, weights = goss_sample(grad, params.goss_top_rate, params.goss_other_rate,
                                    seed=[params.seed, it])
        grown = grow_tree(train_set, rows, weights, grad, hess, params, n_bins)
        if grown is None:
            break
        tree, leaf_rows = grown
        for lid, idx in enumerate(leaf_rows):
            step = _leaf_step(params, grad[idx], y[idx] - pred[idx])
            tree.leaf_value[lid] = step / params.learning_rate
        for lid, idx in enumerate(leaf_rows):
            pred[idx] += params.learning_rate * tree.leaf_value[lid]
        trees.append(tree)
        train_hist.append(loss_value(params.loss, y, pred, q))

        if valid_set is not None:
            leaf = tree.leaf_index_binned(valid_set.bins)
            vpred += params.learning_rate * tree.leaf_value[leaf]
            val = loss_value(params.loss, valid_set.target, vpred, q)
            valid_hist.append(val)
            if val < best_val:
                best_val, best_iter = val, len(trees)
            elif len(trees) - best_iter >= params.early_stopping_rounds:
                break

    return TreeEnsemble(
        trees=trees,
        base_score=base,
        learning_rate=params.learning_rate,
        bin_boundaries=[e.copy() for e in train_set.edges],
        loss=params.loss,
        quantile=q,
        transform=params.transform,
        best_iteration=best_iter if valid_set is not None else len(trees),
        pollutant=pollutant,
        params=asdict(params),
        train_loss=train_hist,
        valid_loss=valid_hist,
    )
