"""Segmentation scoring: Dice per structure, vertical diameters and vCDR error."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputWarning,
    DimensionMismatch,
    InvalidGroundTruth,
    MissingPrediction,
)
from .masks import LabelMask, Region, region_of


@dataclass(frozen=True)
class SegScore:
    image_id: str
    dice_od: float
    dice_oc: float
    vcdr_pred: float
    vcdr_true: float
    abs_error: float
    empty_prediction: bool = False


@dataclass(frozen=True)
class SegSummary:
    team_id: str
    mean_dice_od: float
    mean_dice_oc: float
    mean_abs_error: float
    per_image: tuple[SegScore, ...] = field(repr=False)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap ``2|a & b| / (|a| + |b|)``; two empty regions score 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatch(f"region shapes differ: {a.shape} vs {b.shape}")
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def vertical_diameter(region: np.ndarray) -> int:
    """Inclusive row extent of a region, 0 when empty."""
    rows = np.flatnonzero(np.asarray(region, dtype=bool).any(axis=1))
    if rows.size == 0:
        return 0
    return int(rows[-1] - rows[0] + 1)


def _vcdr(mask: LabelMask, od_includes_cup: bool) -> float | None:
    d_od = vertical_diameter(region_of(mask, Region.OD, od_includes_cup))
    if d_od == 0:
        return None
    return vertical_diameter(region_of(mask, Region.OC)) / d_od


def vcdr(mask: LabelMask, od_includes_cup: bool = True) -> float:
    """Vertical cup-to-disc ratio. A mask without disc pixels yields 0 and a warning."""
    value = _vcdr(mask, od_includes_cup)
    if value is None:
        warnings.warn("mask has an empty optic disc region; vCDR set to 0", DegenerateInputWarning, stacklevel=2)
        return 0.0
    return value


def score_image(image_id: str, pred: LabelMask, truth: LabelMask, od_includes_cup: bool = True) -> SegScore:
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"{image_id}: prediction {pred.width}x{pred.height} vs truth {truth.width}x{truth.height}")
    true_ratio = _vcdr(truth, od_includes_cup)
    if true_ratio is None:
        raise InvalidGroundTruth(f"{image_id}: ground-truth optic disc region is empty")
    pred_ratio = _vcdr(pred, od_includes_cup)
    empty = pred_ratio is None
    if empty:
        pred_ratio = 0.0
    return SegScore(
        image_id=image_id,
        dice_od=dice(region_of(pred, Region.OD, od_includes_cup), region_of(truth, Region.OD, od_includes_cup)),
        dice_oc=dice(region_of(pred, Region.OC), region_of(truth, Region.OC)),
        vcdr_pred=pred_ratio,
        vcdr_true=true_ratio,
        abs_error=abs(pred_ratio - true_ratio),
        empty_prediction=empty,
    )


def summarize(team_id: str, scores) -> SegSummary:
    scores = tuple(sorted(scores, key=lambda s: s.image_id))
    return SegSummary(
        team_id=team_id,
        mean_dice_od=float(np.mean([s.dice_od for s in scores])),
        mean_dice_oc=float(np.mean([s.dice_oc for s in scores])),
        mean_abs_error=float(np.mean([s.abs_error for s in scores])),
        per_image=scores,
    )


def evaluate_segmentation(
    predictions: dict[str, LabelMask],
    truths: dict[str, LabelMask],
    team_id: str = "",
    od_includes_cup: bool = True,
    max_workers: int | None = None,
) -> SegSummary:
    """Score every ground-truth image against its prediction.

    Predictions without a ground-truth counterpart are ignored. Output order
    is by image id whether or not ``max_workers`` enables threading.
    """
    if not truths:
        raise InvalidGroundTruth("no ground-truth images supplied")
    missing = set(truths) - set(predictions)
    if missing:
        raise MissingPrediction(missing)
    ids = sorted(truths)

    def work(image_id):
        return score_image(image_id, predictions[image_id], truths[image_id], od_includes_cup)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            scores = list(pool.map(work, ids))
    else:
        scores = [work(i) for i in ids]
    empties = [s.image_id for s in scores if s.empty_prediction]
    if empties:
        warnings.warn(
            f"{len(empties)} prediction(s) with empty optic disc scored with vCDR 0: {', '.join(empties[:10])}",
            DegenerateInputWarning,
            stacklevel=2,
        )
    return summarize(team_id, scores)
