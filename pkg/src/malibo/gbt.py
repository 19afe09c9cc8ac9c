"""Gradient-boosted regression trees on the improvement-weighted BCE loss.

Newton boosting: each stage greedily grows a depth-limited regression tree
on the per-example loss gradients (splits chosen by exact variance-of-
gradient reduction over sorted unique feature values) and assigns leaf
values -sum(g)/sum(h). Leaves are unregularized Newton steps: no L1/L2
shrinkage beyond the stage learning rate. A pluggable base logit lets a
meta-learned classifier act as the zeroth, strong learner of the ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .base import ParamsMixin, check_is_fitted
from .data import LabeledSet
from .losses import sigmoid, weighted_bce, weighted_bce_grad, weighted_bce_hess
from .validation import check_consistent_length, check_rng

BaseLogit = Union[float, Callable[[np.ndarray], np.ndarray], None]


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _leaf_value(g: np.ndarray, h: np.ndarray) -> float:
    hs = float(np.sum(h))
    return -float(np.sum(g)) / hs if hs > 0 else 0.0


_TIE_RTOL = 1e-9  # gains this close count as tied and resolve by position


def _best_split(X: np.ndarray, g: np.ndarray, min_leaf: int):
    """Exact greedy split by reduction of the gradient sum of squares.

    Returns ``(gain, feature, threshold)``; ``gain <= 0`` means no split.
    Ties resolve to the lowest feature index, then the lowest threshold.
    Gains within a relative 1e-9 count as tied, which keeps the chosen
    structure stable when duplicated gradient values make distinct splits
    mathematically equivalent up to summation order.
    """
    n, n_features = X.shape
    total = float(np.sum(g))
    parent_score = total * total / n
    best = (0.0, -1, 0.0)
    for j in range(n_features):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        gs = g[order]
        # split positions: boundaries between distinct consecutive values
        boundary = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # left part sizes
        if boundary.size == 0:
            continue
        left_n = boundary.astype(np.float64)
        prefix = np.cumsum(gs)
        left_sum = prefix[boundary - 1]
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not np.any(valid):
            continue
        gains = left_sum**2 / left_n + (total - left_sum) ** 2 / right_n - parent_score
        gains[~valid] = -np.inf
        g_max = float(np.max(gains))
        if g_max <= 0.0:
            continue
        k = int(np.argmax(gains >= g_max * (1.0 - _TIE_RTOL)))  # first near-max
        if gains[k] > best[0] * (1.0 + _TIE_RTOL):
            thr = 0.5 * (xs[boundary[k] - 1] + xs[boundary[k]])
            best = (float(gains[k]), j, float(thr))
    return best


def _grow_tree(X, g, h, depth, cfg) -> _Node:
    node = _Node(value=_leaf_value(g, h))
    n = len(g)
    if depth >= cfg.max_depth or n < cfg.min_samples_split:
        return node
    gain, feature, threshold = _best_split(X, g, cfg.min_samples_leaf)
    if gain <= 0.0 or feature < 0:
        return node
    mask = X[:, feature] <= threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _grow_tree(X[mask], g[mask], h[mask], depth + 1, cfg)
    node.right = _grow_tree(X[~mask], g[~mask], h[~mask], depth + 1, cfg)
    return node


def _predict_tree(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(node, np.arange(len(X)))]
    while stack:
        cur, idx = stack.pop()
        if cur.is_leaf:
            out[idx] = cur.value
            continue
        mask = X[idx, cur.feature] <= cur.threshold
        stack.append((cur.left, idx[mask]))
        stack.append((cur.right, idx[~mask]))
    return out


def _tree_structure(node: _Node) -> list:
    """Split skeleton (no leaf values), for structural comparisons in tests."""
    if node.is_leaf:
        return ["leaf"]
    return [(node.feature, node.threshold)] + _tree_structure(node.left) + _tree_structure(
        node.right
    )


class GradientBoostedClassifier(ParamsMixin):
    """Weighted-logistic boosted trees with a pluggable base logit.

    ``predict_logit(X) = base(X) + learning_rate * sum_i tree_i(X)``.
    The default hyperparameters follow the reference tree-ensemble setup:
    100 stages, learning rate 0.1, depth 3, pure-python exact splits.
    """

    def __init__(self, n_estimators: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, min_samples_split: int = 2,
                 min_samples_leaf: int = 1):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf

        self.trees_: list[_Node] | None = None
        self.base_: BaseLogit = None
        self.staged_train_loss_: np.ndarray | None = None
        self.one_class_: bool = False

    def _base_values(self, X: np.ndarray) -> np.ndarray:
        if self.base_ is None:
            return np.zeros(len(X))
        if callable(self.base_):
            return np.asarray(self.base_(X), dtype=np.float64)
        return np.full(len(X), float(self.base_))

    def fit(self, X, labeled: LabeledSet, base: BaseLogit = None) -> "GradientBoostedClassifier":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        check_consistent_length(X, labeled.labels)
        if len(X) == 0:
            raise ValueError("cannot fit on an empty dataset")
        w = labeled.weights
        self.base_ = base
        self.trees_ = []
        self.one_class_ = bool(labeled.labels.all() and not w.any())
        if self.one_class_:
            # all observations tied at the threshold: no signal, keep base only
            self.staged_train_loss_ = np.asarray(
                [float(np.mean(weighted_bce(self._base_values(X), w)))]
            )
            return self

        s = self._base_values(X)
        losses = [float(np.mean(weighted_bce(s, w)))]
        for _ in range(self.n_estimators):
            g = weighted_bce_grad(s, w)
            h = weighted_bce_hess(s, w)
            tree = _grow_tree(X, g, h, 0, self)
            self.trees_.append(tree)
            s = s + self.learning_rate * _predict_tree(tree, X)
            losses.append(float(np.mean(weighted_bce(s, w))))
        self.staged_train_loss_ = np.asarray(losses)
        return self

    def predict_logit(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        single = np.asarray(X).ndim == 1
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s = self._base_values(X)
        for tree in self.trees_:
            s = s + self.learning_rate * _predict_tree(tree, X)
        return float(s[0]) if single else s

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_logit(X))

    def staged_logits(self, X):
        """Yield the running logit after the base and after each stage."""
        check_is_fitted(self, "trees_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s = self._base_values(X)
        yield s.copy()
        for tree in self.trees_:
            s = s + self.learning_rate * _predict_tree(tree, X)
            yield s.copy()

    def tree_structures(self) -> list[list]:
        check_is_fitted(self, "trees_")
        return [_tree_structure(t) for t in self.trees_]


def estimate_n_trees(X, labeled: LabeledSet, base: BaseLogit, rng,
                     split: float = 0.7, **gbt_params) -> int:
    """Stage count minimizing held-out loss on a random 70/30 split.

    Falls back to 1 for fewer than 4 examples or a degenerate split. The
    returned count is meant to be used as ``n_estimators`` for a final fit
    on all data.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    if n < 4:
        return 1
    rng = check_rng(rng)
    perm = rng.permutation(n)
    n_train = int(round(split * n))
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    if len(train_idx) == 0 or len(val_idx) == 0:
        return 1
    sub = LabeledSet(labeled.tau, labeled.labels[train_idx], labeled.weights[train_idx],
                     labeled.gamma)
    clf = GradientBoostedClassifier(**gbt_params).fit(X[train_idx], sub, base)
    if clf.one_class_ or not clf.trees_:
        return 1
    w_val = labeled.weights[val_idx]
    losses = [float(np.mean(weighted_bce(s, w_val))) for s in clf.staged_logits(X[val_idx])]
    # stage 0 is the bare base; at least one tree is always kept
    return max(1, int(np.argmin(losses)))
