import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn import metrics

from badgesteer.evaluation import (
    REPORT_HEADER, accuracy, confusion, cross_validate, f1_weighted, feature_ablation, roc_auc,
    stratified_folds, write_reports_csv,
)
from badgesteer.model import GBDTConfig
from badgesteer.synth import make_decline_dataset

labels = st.lists(st.integers(0, 1), min_size=4, max_size=60)


@settings(max_examples=200)
@given(labels, st.integers(0, 10**6))
def test_metrics_match_sklearn(y, seed):
    y = np.array(y)
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 2, y.size)
    cm = confusion(y, pred)
    np.testing.assert_array_equal(cm, metrics.confusion_matrix(y, pred, labels=[0, 1]))
    assert accuracy(cm) == pytest.approx(metrics.accuracy_score(y, pred))
    assert f1_weighted(cm) == pytest.approx(metrics.f1_score(y, pred, average="weighted", zero_division=0))
    if 0 < y.sum() < y.size:
        scores = np.round(rng.random(y.size), 1)  # ties exercise average ranks
        assert roc_auc(y, scores) == pytest.approx(metrics.roc_auc_score(y, scores), abs=1e-12)


def test_folds_stratified_and_seeded():
    y = np.array([0] * 73 + [1] * 27)
    f = stratified_folds(y, 10, seed=1)
    for k in range(10):
        assert abs((y[f == k]).sum() - 2.7) <= 1
        assert abs((f == k).sum() - 10) <= 1
    np.testing.assert_array_equal(f, stratified_folds(y, 10, seed=1))
    assert not np.array_equal(f, stratified_folds(y, 10, seed=2))
    with pytest.raises(ValueError):
        stratified_folds(np.array([0] * 20 + [1] * 3), 5, 0)


def test_cross_validate_and_ablation():
    X, y = make_decline_dataset(600, seed=3)
    cfg = GBDTConfig(n_trees=20, max_depth=2, min_samples_leaf=5)
    rep = cross_validate(X, y, cfg, folds=5)
    assert rep.confusion.sum() == 600
    assert rep.roc_auc > 0.9 and len(rep.per_fold["roc_auc"]) == 5
    blocks = {"U": list(range(10)), "E": list(range(10, 19)), "T": list(range(19, 59))}
    out = feature_ablation(X, y, blocks, config=cfg, folds=5)
    assert list(out) == ["U", "E", "T", "U+E+T"]
    assert out["T"].roc_auc > 0.9 > out["U"].roc_auc
    with pytest.raises(ValueError, match="unknown"):
        feature_ablation(X, y, blocks, combinations=[("Z",)], config=cfg)
    buf = io.StringIO()
    write_reports_csv(out, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER) and len(lines) == 5
