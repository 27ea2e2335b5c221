"""Gradient-boosted regression trees for binary classification under logistic loss.

Each round fits a depth-limited tree to the negative gradient ``y - p`` with
exact greedy splits (variance reduction, ties to the lowest feature index and
then the lowest threshold) and sets leaf values to the Newton step
``sum(y - p) / sum(p (1 - p))`` scaled by the learning rate. Training rows are
put in a canonical order first, so the fitted model does not depend on the
order of the input rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_binary_labels, check_positive_int

DUMP_VERSION = 1
_MIN_HESSIAN = 1e-150


@dataclass(frozen=True)
class GBDTConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    seed: int = 42

    def __post_init__(self):
        check_positive_int(self.n_trees, "n_trees")
        check_positive_int(self.max_depth, "max_depth")
        check_positive_int(self.min_samples_leaf, "min_samples_leaf")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must lie in (0, 1]; got {self.learning_rate!r}")


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@numba.njit(cache=True)
def _best_splits(sorted_vals, sorted_idx, resid, node_of, n_nodes, min_leaf):
    n_feat, n = sorted_vals.shape
    tot_s = np.zeros(n_nodes)
    tot_c = np.zeros(n_nodes, np.int64)
    for i in range(n):
        nd = node_of[i]
        if nd >= 0:
            tot_s[nd] += resid[i]
            tot_c[nd] += 1
    best_gain = np.zeros(n_nodes)
    best_f = np.full(n_nodes, -1, np.int64)
    best_thr = np.zeros(n_nodes)
    left_s = np.zeros(n_nodes)
    left_c = np.zeros(n_nodes, np.int64)
    last_v = np.zeros(n_nodes)
    for f in range(n_feat):
        left_s[:] = 0.0
        left_c[:] = 0
        for t in range(n):
            i = sorted_idx[f, t]
            nd = node_of[i]
            if nd < 0:
                continue
            v = sorted_vals[f, t]
            c = left_c[nd]
            cr = tot_c[nd] - c
            if c >= min_leaf and cr >= min_leaf and v > last_v[nd]:
                sl = left_s[nd]
                sr = tot_s[nd] - sl
                gain = sl * sl / c + sr * sr / cr - tot_s[nd] * tot_s[nd] / tot_c[nd]
                if gain > best_gain[nd]:
                    best_gain[nd] = gain
                    best_f[nd] = f
                    thr = 0.5 * (last_v[nd] + v)
                    if thr >= v:
                        thr = last_v[nd]
                    best_thr[nd] = thr
            left_s[nd] += resid[i]
            left_c[nd] += 1
            last_v[nd] = v
    return best_f, best_thr, best_gain


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, margin) -> float:
    """Mean logistic loss of raw margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def _grow_tree(X, sorted_vals, sorted_idx, y, prob, config: GBDTConfig) -> tuple[Tree, np.ndarray]:
    n = X.shape[0]
    resid = y - prob
    hess = prob * (1.0 - prob)
    node_of = np.zeros(n, np.int64)  # index into the level's open nodes, -1 once in a leaf
    leaf_of = np.zeros(n, np.int64)  # final tree node of every row
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    open_nodes = [0]
    for _depth in range(config.max_depth):
        if not open_nodes:
            break
        bf, bt, _ = _best_splits(sorted_vals, sorted_idx, resid, node_of, len(open_nodes), config.min_samples_leaf)
        next_open = []
        remap = np.full(len(open_nodes), -1, np.int64)
        for j, tree_node in enumerate(open_nodes):
            if bf[j] < 0:
                continue
            lo, hi = len(feature), len(feature) + 1
            feature[tree_node], threshold[tree_node] = int(bf[j]), float(bt[j])
            left[tree_node], right[tree_node] = lo, hi
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
            remap[j] = len(next_open) // 2
            next_open += [lo, hi]
        rows = np.flatnonzero(node_of >= 0)
        slots = node_of[rows]
        split = remap[slots] >= 0
        # rows whose node became a leaf are finished
        node_of[rows[~split]] = -1
        rows, slots = rows[split], slots[split]
        if rows.size:
            go_left = X[rows, bf[slots]] <= bt[slots]
            base = remap[slots] * 2
            node_of[rows] = np.where(go_left, base, base + 1)
            leaf_of[rows] = np.asarray(next_open, np.int64)[node_of[rows]]
        open_nodes = next_open
    n_nodes = len(feature)
    sum_r = np.bincount(leaf_of, weights=resid, minlength=n_nodes)
    sum_h = np.bincount(leaf_of, weights=hess, minlength=n_nodes)
    value = np.where(
        sum_h > _MIN_HESSIAN, config.learning_rate * sum_r / np.maximum(sum_h, _MIN_HESSIAN), 0.0
    )
    value[np.asarray(feature) >= 0] = 0.0
    tree = Tree(
        np.asarray(feature, np.int64),
        np.asarray(threshold, np.float64),
        np.asarray(left, np.int64),
        np.asarray(right, np.int64),
        value,
    )
    return tree, tree.value[leaf_of]


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order sorted by (x_0, ..., x_{d-1}, y)."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


class GradientBoostedClassifier(ClassifierMixin, BaseEstimator):
    """Logistic-loss gradient boosting with exact greedy regression trees.

    Parameters
    ----------
    n_trees : int
    max_depth : int
    learning_rate : float
        Shrinkage in (0, 1] applied to every leaf's Newton step.
    min_samples_leaf : int
    random_state : int
        Recorded for provenance; fitting itself draws no random numbers.
    """

    def __init__(self, n_trees=200, max_depth=4, learning_rate=0.1, min_samples_leaf=20, random_state=42):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    @classmethod
    def from_config(cls, config: GBDTConfig) -> "GradientBoostedClassifier":
        return cls(config.n_trees, config.max_depth, config.learning_rate, config.min_samples_leaf, config.seed)

    @property
    def config(self) -> GBDTConfig:
        return GBDTConfig(self.n_trees, self.max_depth, self.learning_rate, self.min_samples_leaf, self.random_state)

    def fit(self, X, y):
        config = self.config
        X = check_array(X, dtype=np.float64)
        y = check_binary_labels(y, X.shape[0]).astype(np.float64)
        n_pos = int(y.sum())
        if min(n_pos, len(y) - n_pos) < 2:
            raise ValueError("degenerate labels: need at least two examples of each class")
        order = canonical_order(X, y)
        X, y = np.ascontiguousarray(X[order]), y[order]
        sorted_idx = np.ascontiguousarray(
            np.stack([np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]).astype(np.int64)
        )
        sorted_vals = np.ascontiguousarray(np.take_along_axis(X.T, sorted_idx, axis=1))
        rate = n_pos / len(y)
        self.base_score_ = float(np.log(rate / (1.0 - rate)))
        margin = np.full(len(y), self.base_score_)
        self.trees_ = []
        self.train_loss_ = [log_loss(y, margin)]
        for _ in range(config.n_trees):
            tree, step = _grow_tree(X, sorted_vals, sorted_idx, y, _sigmoid(margin), config)
            if tree.n_nodes == 1 and tree.value[0] == 0.0:
                break
            self.trees_.append(tree)
            margin = margin + step
            self.train_loss_.append(log_loss(y, margin))
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        margin = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            margin += tree.predict(X)
        return margin

    def predict_proba(self, X) -> np.ndarray:
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    # plain-text dump

    def dump(self) -> str:
        check_is_fitted(self, "trees_")
        c = self.config
        lines = [
            f"gbdt-dump {DUMP_VERSION}",
            f"n_trees={c.n_trees} max_depth={c.max_depth} learning_rate={c.learning_rate!r} "
            f"min_samples_leaf={c.min_samples_leaf} seed={c.seed}",
            f"n_features={self.n_features_in_}",
            f"base_score={self.base_score_!r}",
        ]
        for t_idx, t in enumerate(self.trees_):
            lines.append(f"tree {t_idx} nodes={t.n_nodes}")
            for i in range(t.n_nodes):
                lines.append(
                    f"{i} {int(t.feature[i])} {float(t.threshold[i])!r} {int(t.left[i])} "
                    f"{int(t.right[i])} {float(t.value[i])!r}"
                )
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "GradientBoostedClassifier":
        lines = text.splitlines()
        if not lines or lines[0] != f"gbdt-dump {DUMP_VERSION}":
            raise ValueError("not a gbdt dump (or unsupported version)")
        params = dict(kv.split("=") for kv in lines[1].split())
        model = cls(
            n_trees=int(params["n_trees"]),
            max_depth=int(params["max_depth"]),
            learning_rate=float(params["learning_rate"]),
            min_samples_leaf=int(params["min_samples_leaf"]),
            random_state=int(params["seed"]),
        )
        model.n_features_in_ = int(lines[2].split("=")[1])
        model.base_score_ = float(lines[3].split("=")[1])
        model.classes_ = np.array([0, 1])
        model.trees_ = []
        pos = 4
        while pos < len(lines):
            n_nodes = int(lines[pos].split("nodes=")[1])
            rows = [lines[pos + 1 + i].split() for i in range(n_nodes)]
            model.trees_.append(Tree(
                np.array([int(r[1]) for r in rows], np.int64),
                np.array([float(r[2]) for r in rows]),
                np.array([int(r[3]) for r in rows], np.int64),
                np.array([int(r[4]) for r in rows], np.int64),
                np.array([float(r[5]) for r in rows]),
            ))
            pos += 1 + n_nodes
        return model


def train(features, labels, config: GBDTConfig | None = None) -> GradientBoostedClassifier:
    return GradientBoostedClassifier.from_config(config or GBDTConfig()).fit(features, labels)


def predict(model: GradientBoostedClassifier, feature_vector) -> float:
    x = np.asarray(feature_vector, dtype=float).reshape(1, -1)
    return float(model.predict_proba(x)[0, 1])
