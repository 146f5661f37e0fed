"""Fusion of several teams' outputs: mask voting and likelihood averaging."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cls_metrics import ScoreTable
from .errors import (
    DegenerateInputWarning,
    DimensionMismatch,
    IdMismatch,
    LabelConflict,
    TooFewMasks,
    ValidationError,
)
from .masks import LabelMask, Region, region_of


@dataclass(frozen=True)
class VoteConfig:
    """A pixel joins a fused region when its vote count exceeds
    ``threshold_fraction * n`` (or reaches it, with ``inclusive``)."""

    threshold_fraction: float = 0.5
    inclusive: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold_fraction <= 1.0:
            raise ValidationError(f"threshold_fraction must lie in (0, 1], got {self.threshold_fraction}")

    def passes(self, votes: np.ndarray, n: int) -> np.ndarray:
        cut = self.threshold_fraction * n
        return votes >= cut if self.inclusive else votes > cut


def majority_vote(masks, cfg: VoteConfig = VoteConfig()) -> LabelMask:
    """Fuse label masks by voting separately on the disc and cup regions."""
    masks = list(masks)
    if len(masks) < 2:
        raise TooFewMasks(f"need at least 2 masks to vote, got {len(masks)}")
    shape = masks[0].shape
    for i, m in enumerate(masks[1:], start=1):
        if m.shape != shape:
            raise DimensionMismatch(f"mask {i} is {m.shape[::-1]}, expected {shape[::-1]}")
    od_votes = np.zeros(shape, dtype=np.int32)
    oc_votes = np.zeros(shape, dtype=np.int32)
    for m in masks:
        od_votes += region_of(m, Region.OD)
        oc_votes += region_of(m, Region.OC)
    n = len(masks)
    return LabelMask.from_regions(cfg.passes(od_votes, n), cfg.passes(oc_votes, n))


def normalize_scores(table: ScoreTable) -> ScoreTable:
    """Min-max rescale likelihoods to [0, 1]; a constant table maps to 0.5."""
    if len(table) == 0:
        raise ValidationError("cannot normalize an empty score table")
    p = table.likelihoods
    lo, hi = float(p.min()), float(p.max())
    if hi == lo:
        warnings.warn("all likelihoods equal; normalized to 0.5", DegenerateInputWarning, stacklevel=2)
        return ScoreTable(table.image_ids, np.full(p.shape, 0.5), table.labels, table.flags | {"constant_scores"})
    return ScoreTable(table.image_ids, (p - lo) / (hi - lo), table.labels, table.flags)


def average_scores(tables) -> ScoreTable:
    """Per-image mean of already-normalized likelihood tables.

    Labels are carried over from whichever inputs have them and must agree.
    """
    tables = list(tables)
    if not tables:
        raise ValidationError("no score tables to average")
    ids = tables[0].image_ids
    for k, t in enumerate(tables[1:], start=1):
        if t.image_ids != ids:
            only_first = sorted(set(ids) - set(t.image_ids))
            only_k = sorted(set(t.image_ids) - set(ids))
            raise IdMismatch(f"table {k} ids differ: missing {only_first[:10]}, extra {only_k[:10]}")
    labels = None
    for t in tables:
        if t.labels is None:
            continue
        if labels is None:
            labels = t.labels
        elif not np.array_equal(labels, t.labels):
            bad = [ids[i] for i in np.flatnonzero(labels != t.labels)]
            raise LabelConflict(f"labels disagree for: {', '.join(bad[:10])}")
    # sorting per image makes the float sum independent of table order
    mean = np.mean(np.sort(np.stack([t.likelihoods for t in tables]), axis=0), axis=0)
    flags = frozenset().union(*(t.flags for t in tables))
    return ScoreTable(ids, mean, labels, flags)
