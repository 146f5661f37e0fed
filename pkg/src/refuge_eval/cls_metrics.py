"""Glaucoma classification scoring: ROC, AUC, reference sensitivity, operating points."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, IdMismatch, NonFiniteValue, ValidationError

REFERENCE_SPECIFICITY = 0.85
_COINCIDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Per-image likelihoods, optionally with binary labels (1 = glaucoma).

    Rows are kept sorted by image id. ``flags`` records fallback conventions
    applied while producing the table (e.g. ``"constant_scores"``).
    """

    image_ids: tuple[str, ...]
    likelihoods: np.ndarray
    labels: np.ndarray | None = None
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.image_ids)
        scores = np.asarray(self.likelihoods, dtype=float).reshape(-1)
        if len(ids) != scores.size:
            raise ValidationError(f"{len(ids)} ids but {scores.size} likelihoods")
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate image ids: {', '.join(dup[:10])}")
        if not np.isfinite(scores).all():
            raise NonFiniteValue("likelihoods must be finite")
        labels = None
        if self.labels is not None:
            labels = np.asarray(self.labels).reshape(-1)
            if labels.size != len(ids):
                raise ValidationError(f"{len(ids)} ids but {labels.size} labels")
            if not np.isin(labels, (0, 1)).all():
                raise ValidationError("labels must be 0 or 1")
            labels = labels.astype(np.int8)
        order = sorted(range(len(ids)), key=ids.__getitem__)
        scores = scores[order]
        scores.setflags(write=False)
        if labels is not None:
            labels = labels[order]
            labels.setflags(write=False)
        object.__setattr__(self, "image_ids", tuple(ids[i] for i in order))
        object.__setattr__(self, "likelihoods", scores)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @classmethod
    def from_entries(cls, entries) -> "ScoreTable":
        """Build from ``(image_id, likelihood, label)`` triples."""
        entries = list(entries)
        return cls(
            [e[0] for e in entries],
            [e[1] for e in entries],
            [int(e[2]) for e in entries],
        )

    @classmethod
    def from_maps(cls, likelihoods: dict, labels: dict | None = None) -> "ScoreTable":
        ids = sorted(likelihoods)
        if labels is not None:
            _check_same_ids(likelihoods, labels)
            return cls(ids, [likelihoods[i] for i in ids], [labels[i] for i in ids])
        return cls(ids, [likelihoods[i] for i in ids])

    def __len__(self):
        return len(self.image_ids)

    def with_labels(self, labels: dict) -> "ScoreTable":
        _check_same_ids(dict.fromkeys(self.image_ids), labels)
        return ScoreTable(self.image_ids, self.likelihoods, [labels[i] for i in self.image_ids], self.flags)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.image_ids, self.likelihoods.tolist()))

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Positive and negative likelihoods; requires both classes."""
        if self.labels is None:
            raise DegenerateLabels("score table carries no labels")
        pos = self.likelihoods[self.labels == 1]
        neg = self.likelihoods[self.labels == 0]
        if pos.size == 0 or neg.size == 0:
            raise DegenerateLabels(f"need both classes, got {pos.size} positive / {neg.size} negative")
        return pos, neg


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry is +inf (nothing called positive)
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


@dataclass(frozen=True)
class OperatingPoint:
    sensitivity: float
    specificity: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int


def _check_same_ids(a: dict, b: dict):
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise IdMismatch(f"id sets differ: only in first {only_a[:10]}, only in second {only_b[:10]}")


def roc_curve(table: ScoreTable) -> RocCurve:
    """Sweep thresholds over distinct likelihoods, high to low.

    Tied likelihoods move the curve in one diagonal step.
    """
    pos, neg = table.split()
    scores = table.likelihoods
    positive = table.labels == 1
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order]
    # last index of each tie group
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.r_[0.0, tp / pos.size]
    fpr = np.r_[0.0, fp / neg.size]
    thresholds = np.r_[np.inf, s[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    for arr in (fpr, tpr, thresholds):
        arr.setflags(write=False)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def auc_mann_whitney(table: ScoreTable) -> float:
    """Probability a positive outscores a negative, ties counted half."""
    pos, neg = table.split()
    ranks = rankdata(np.r_[pos, neg])
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def sensitivity_at_specificity(curve: RocCurve, specificity: float = REFERENCE_SPECIFICITY) -> float:
    """TPR at FPR = 1 - specificity, linearly interpolated between ROC vertices."""
    if not 0.0 < specificity < 1.0:
        raise ValidationError(f"specificity must lie in (0, 1), got {specificity}")
    target = 1.0 - specificity
    fpr, tpr = curve.fpr, curve.tpr
    hit = np.abs(fpr - target) <= _COINCIDE_TOL
    if hit.any():
        return float(tpr[hit].max())
    hi = int(np.searchsorted(fpr, target, side="right"))
    lo = hi - 1  # last vertex left of target; the highest TPR at that FPR
    x0, x1, y0, y1 = fpr[lo], fpr[hi], tpr[lo], tpr[hi]
    return float(y0 + (y1 - y0) * (target - x0) / (x1 - x0))


def operating_point(predictions: dict, labels: dict) -> OperatingPoint:
    """Sensitivity, specificity and accuracy of binary decisions."""
    _check_same_ids(predictions, labels)
    ids = sorted(labels)
    p = np.array([int(predictions[i]) for i in ids])
    y = np.array([int(labels[i]) for i in ids])
    if not (np.isin(p, (0, 1)).all() and np.isin(y, (0, 1)).all()):
        raise ValidationError("predictions and labels must be 0 or 1")
    tp = int(np.sum((p == 1) & (y == 1)))
    fn = int(np.sum((p == 0) & (y == 1)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fp = int(np.sum((p == 1) & (y == 0)))
    if tp + fn == 0 or tn + fp == 0:
        raise DegenerateLabels("need at least one positive and one negative label")
    return OperatingPoint(
        sensitivity=tp / (tp + fn),
        specificity=tn / (tn + fp),
        accuracy=(tp + tn) / len(ids),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def agreement(a: dict, b: dict) -> float:
    """Fraction of images on which two binary gradings coincide."""
    _check_same_ids(a, b)
    if not a:
        raise ValidationError("no images to compare")
    return sum(int(a[i]) == int(b[i]) for i in a) / len(a)
