import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refuge_eval.cls_metrics import (
    RocCurve,
    ScoreTable,
    agreement,
    auc_mann_whitney,
    operating_point,
    roc_curve,
    sensitivity_at_specificity,
)
from refuge_eval.errors import DegenerateLabels, IdMismatch, ValidationError


def table(pos, neg):
    scores = list(pos) + list(neg)
    labels = [1] * len(pos) + [0] * len(neg)
    return ScoreTable([f"i{k:03d}" for k in range(len(scores))], scores, labels)


def pair_count_auc(pos, neg):
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


def test_perfect_separation():
    curve = roc_curve(table([0.9], [0.1]))
    assert list(zip(curve.fpr, curve.tpr)) == [(0, 0), (0, 1), (1, 1)]
    assert curve.auc == 1.0
    assert auc_mann_whitney(table([0.9], [0.1])) == 1.0


def test_all_tied_collapses_to_diagonal():
    curve = roc_curve(table([0.3, 0.3], [0.3, 0.3, 0.3]))
    assert list(zip(curve.fpr, curve.tpr)) == [(0, 0), (1, 1)]
    assert curve.auc == 0.5


def test_pair_counting_example():
    t = table([0.8, 0.4], [0.6, 0.2])
    assert pair_count_auc([0.8, 0.4], [0.6, 0.2]) == 0.75
    assert roc_curve(t).auc == 0.75
    assert auc_mann_whitney(t) == 0.75


def test_reversed_separation():
    assert auc_mann_whitney(table([0.1, 0.2], [0.8, 0.9])) == 0.0


def test_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        roc_curve(table([0.1, 0.5], []))
    with pytest.raises(DegenerateLabels):
        auc_mann_whitney(ScoreTable(["a", "b"], [0.1, 0.2]))


def test_curve_shape_and_thresholds():
    curve = roc_curve(table([0.9, 0.7, 0.7], [0.7, 0.2]))
    assert curve.thresholds[0] == np.inf
    assert curve.thresholds[1:].tolist() == [0.9, 0.7, 0.2]
    assert (curve.fpr[0], curve.tpr[0], curve.fpr[-1], curve.tpr[-1]) == (0, 0, 1, 1)
    assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()


def test_likelihoods_outside_unit_interval():
    assert auc_mann_whitney(table([12.0, -3.0], [-40.0, 7.0])) == pair_count_auc([12, -3], [-40, 7])


# --- reference sensitivity --------------------------------------------------

def test_se_at_sp_interpolates():
    curve = RocCurve(np.array([0.0, 0.1, 0.2, 1.0]), np.array([0.0, 0.8, 0.9, 1.0]),
                     np.array([np.inf, 3, 2, 1]), auc=0.0)
    assert sensitivity_at_specificity(curve, 0.85) == pytest.approx(0.85, abs=1e-12)


def test_se_at_sp_perfect_and_random():
    perfect = roc_curve(table([0.9, 0.8], [0.1, 0.2]))
    for sp in (0.1, 0.5, 0.85, 0.99):
        assert sensitivity_at_specificity(perfect, sp) == 1.0
    diagonal = RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([np.inf, 0.5]), 0.5)
    assert sensitivity_at_specificity(diagonal, 0.85) == pytest.approx(0.15, abs=1e-12)


def test_se_at_sp_takes_highest_tpr_on_vertical_segment():
    # 20 negatives: FPR 3/20 = 0.15 is an exact vertex, with two TPRs stacked there
    pos = [0.95, 0.9, 0.8, 0.5]
    neg = [0.99, 0.98, 0.97] + [0.1] * 17
    curve = roc_curve(table(pos, neg))
    assert sensitivity_at_specificity(curve, 0.85) == 1.0


def test_se_at_sp_rejects_bad_specificity():
    curve = roc_curve(table([0.9], [0.1]))
    with pytest.raises(ValidationError):
        sensitivity_at_specificity(curve, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_se_at_sp_non_increasing_in_specificity(seed):
    rng = np.random.default_rng(seed)
    n_pos, n_neg = rng.integers(1, 20, size=2)
    t = table(rng.integers(0, 6, n_pos) / 5, rng.integers(0, 6, n_neg) / 5)
    curve = roc_curve(t)
    sps = np.sort(rng.uniform(0.01, 0.99, 10))
    values = [sensitivity_at_specificity(curve, s) for s in sps]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


# --- invariances ------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trapezoid_equals_mann_whitney(seed):
    rng = np.random.default_rng(seed)
    n_pos, n_neg = rng.integers(1, 25, size=2)
    levels = rng.integers(2, 12)
    pos = rng.integers(0, levels, n_pos) / levels
    neg = rng.integers(0, levels, n_neg) / levels
    t = table(pos, neg)
    assert abs(roc_curve(t).auc - auc_mann_whitney(t)) <= 1e-12
    assert abs(auc_mann_whitney(t) - pair_count_auc(pos, neg)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_monotone_invariance_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    pos = rng.normal(1, 1, 15).round(1)
    neg = rng.normal(0, 1, 25).round(1)
    base = table(pos, neg)
    transformed = table(np.exp(3 * pos) + 2, np.exp(3 * neg) + 2)
    assert roc_curve(transformed).auc == roc_curve(base).auc
    perm = rng.permutation(len(base))
    relabeled = ScoreTable([f"z{p}" for p in perm], base.likelihoods, base.labels)
    assert roc_curve(relabeled).auc == roc_curve(base).auc


# --- operating points -------------------------------------------------------

def _labels(n_pos=40, n_neg=360):
    return {f"i{k:03d}": int(k < n_pos) for k in range(n_pos + n_neg)}


def test_operating_point_perfect():
    labels = _labels()
    op = operating_point(dict(labels), labels)
    assert (op.sensitivity, op.specificity, op.accuracy) == (1.0, 1.0, 1.0)


def test_operating_point_all_negative():
    labels = _labels()
    op = operating_point({k: 0 for k in labels}, labels)
    assert (op.sensitivity, op.specificity, op.accuracy) == (0.0, 1.0, 0.9)


@pytest.mark.parametrize("neg_correct, sp, acc", [(328, 0.9111, 0.905), (329, 0.9139, 0.9075)])
def test_expert_operating_points(neg_correct, sp, acc):
    labels = _labels()
    preds = {}
    for k, (image_id, y) in enumerate(sorted(labels.items())):
        if y:
            preds[image_id] = int(k < 34)
        else:
            preds[image_id] = int(k >= 40 + neg_correct)
    op = operating_point(preds, labels)
    assert op.sensitivity == 0.85
    assert op.specificity == pytest.approx(sp, abs=5e-5)
    assert op.accuracy == pytest.approx(acc, abs=1e-12)


def test_operating_point_errors():
    with pytest.raises(IdMismatch):
        operating_point({"a": 1}, {"b": 1})
    with pytest.raises(DegenerateLabels):
        operating_point({"a": 1, "b": 0}, {"a": 1, "b": 1})


def test_agreement():
    a = {f"i{k}": k % 2 for k in range(400)}
    assert agreement(a, dict(a)) == 1.0
    assert agreement(a, {k: 1 - v for k, v in a.items()}) == 0.0
    b = dict(a)
    for k in list(b)[:15]:
        b[k] = 1 - b[k]
    assert agreement(a, b) == 0.9625
    with pytest.raises(IdMismatch):
        agreement(a, {"x": 1})


def test_score_table_validation():
    with pytest.raises(ValidationError):
        ScoreTable(["a", "a"], [0.1, 0.2])
    with pytest.raises(ValidationError):
        ScoreTable(["a"], [float("nan")])
    with pytest.raises(ValidationError):
        ScoreTable(["a"], [0.1], [2])
    t = ScoreTable(["b", "a"], [0.2, 0.1], [0, 1])
    assert t.image_ids == ("a", "b") and t.labels.tolist() == [1, 0]
