"""Cross-validated evaluation: accuracy, weighted F1, ROC AUC, pooled confusion matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np
from sklearn.utils.validation import check_array

from ._validation import check_binary_labels
from .model import GBDTConfig, GradientBoostedClassifier


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    # tie groups share the mean of their 1-based ranks
    starts = np.flatnonzero(np.concatenate([[True], xs[1:] != xs[:-1]]))
    ends = np.concatenate([starts[1:], [len(x)]])
    mean_rank = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mean_rank, ends - starts)
    return ranks


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney estimate of the ROC AUC with average ranks for ties."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes")
    r = _average_ranks(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion(y_true, y_pred) -> np.ndarray:
    """2x2 counts, rows = true class (0, 1), columns = predicted class."""
    m = np.zeros((2, 2), np.int64)
    np.add.at(m, (np.asarray(y_true, np.int64), np.asarray(y_pred, np.int64)), 1)
    return m


def accuracy(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())


def f1_weighted(cm: np.ndarray) -> float:
    """Support-weighted mean of the per-class F1 scores."""
    total = 0.0
    for c in (0, 1):
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        total += f1 * cm[c, :].sum()
    return float(total / cm.sum())


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold index per row; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    counts = np.bincount(y, minlength=2)
    if counts.min() < folds:
        raise ValueError(
            f"cannot stratify {folds} folds: smallest class has {int(counts.min())} examples"
        )
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), np.int64)
    offset = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold


@dataclass
class EvalReport:
    accuracy: float
    f1_weighted: float
    roc_auc: float
    confusion: np.ndarray
    per_fold: dict = field(default_factory=dict)  # metric -> list of per-fold values
    n_features: int = 0

    @property
    def std(self) -> dict:
        return {k: float(np.std(v)) for k, v in self.per_fold.items()}

    def row(self, name: str) -> list:
        cm = self.confusion
        s = self.std
        return [
            name, self.n_features,
            f"{self.accuracy:.4f}", f"{self.f1_weighted:.4f}", f"{self.roc_auc:.4f}",
            int(cm[0, 0]), int(cm[0, 1]), int(cm[1, 0]), int(cm[1, 1]),
            f"{s['accuracy']:.4f}", f"{s['f1_weighted']:.4f}", f"{s['roc_auc']:.4f}",
        ]


REPORT_HEADER = [
    "features", "n_features", "accuracy", "f1_weighted", "roc_auc",
    "tn", "fp", "fn", "tp", "accuracy_std", "f1_weighted_std", "roc_auc_std",
]


def cross_validate(
    features,
    labels,
    config: GBDTConfig | None = None,
    folds: int = 10,
    seed: int = 42,
) -> EvalReport:
    """Stratified k-fold evaluation.

    Confusion, accuracy and weighted F1 pool the out-of-fold predictions; AUC
    is the mean of the per-fold AUCs. Per-fold values of every metric are kept.
    """
    config = config or GBDTConfig()
    X = check_array(features, dtype=np.float64)
    y = check_binary_labels(labels, X.shape[0])
    if X.shape[0] < folds:
        raise ValueError(f"population of {X.shape[0]} is smaller than {folds} folds")
    fold = stratified_folds(y, folds, seed)
    pred = np.empty(len(y), np.int64)
    per_fold = {"accuracy": [], "f1_weighted": [], "roc_auc": []}
    for k in range(folds):
        test = fold == k
        model = GradientBoostedClassifier.from_config(config).fit(X[~test], y[~test])
        prob = model.predict_proba(X[test])[:, 1]
        pred[test] = prob >= 0.5
        cm = confusion(y[test], pred[test])
        per_fold["accuracy"].append(accuracy(cm))
        per_fold["f1_weighted"].append(f1_weighted(cm))
        per_fold["roc_auc"].append(roc_auc(y[test], prob))
    cm = confusion(y, pred)
    return EvalReport(
        accuracy=accuracy(cm),
        f1_weighted=f1_weighted(cm),
        roc_auc=float(np.mean(per_fold["roc_auc"])),
        confusion=cm,
        per_fold=per_fold,
        n_features=X.shape[1],
    )


DEFAULT_COMBINATIONS = (("U",), ("E",), ("T",), ("U", "E", "T"))


def feature_ablation(
    features,
    labels,
    blocks: Mapping[str, Sequence[int]],
    combinations: Sequence[Sequence[str]] = DEFAULT_COMBINATIONS,
    config: GBDTConfig | None = None,
    folds: int = 10,
    seed: int = 42,
) -> dict[str, EvalReport]:
    """``cross_validate`` restricted to each combination of named column blocks."""
    X = check_array(features, dtype=np.float64)
    out = {}
    for combo in combinations:
        unknown = [b for b in combo if b not in blocks]
        if unknown:
            raise ValueError(f"unknown feature block(s) {unknown}; known: {sorted(blocks)}")
        cols = np.concatenate([np.asarray(blocks[b], np.int64) for b in combo])
        out["+".join(combo)] = cross_validate(X[:, cols], labels, config, folds, seed)
    return out


def write_reports_csv(reports: Mapping[str, EvalReport], fh: IO[str], schema_comment: str | None = None):
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for name, rep in reports.items():
        w.writerow(rep.row(name))
