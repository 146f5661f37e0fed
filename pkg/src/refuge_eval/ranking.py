"""Per-metric ranks, weighted challenge scores and leaderboards.

Scores are weighted sums of rank positions, so lower is better everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import BadWeights, IncompleteRow, NonFiniteValue, ValidationError

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"

# (w_od, w_oc, w_mae). The textual segmentation formula weights the disc
# higher; the published leaderboard is only reproducible with the disc and
# cup weights exchanged.
WEIGHT_PRESETS = {
    "eq3": (0.35, 0.25, 0.4),
    "table5": (0.25, 0.35, 0.4),
}
DEFAULT_PRESET = "table5"

OFFLINE_WEIGHTS = (0.4, 0.6)  # (classification rank, segmentation rank)
FINAL_WEIGHTS = (0.3, 0.7)  # (offline position, on-site position)

TIE_BREAK = "lower R_MAE, then lower R_DSC_OD, then team_id (lexicographic)"
VAL_TIE_BREAK = "lower R_segm, then " + TIE_BREAK


def rank_by(values, direction: str = HIGHER_BETTER, ties: str = "fractional") -> list[float]:
    """Rank values so the best gets 1.

    ``ties="fractional"`` gives tied values the mean of their positions,
    ``ties="min"`` the smallest.
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValidationError("cannot rank an empty list")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("rank_by requires finite values")
    if direction == HIGHER_BETTER:
        arr = -arr
    elif direction != LOWER_BETTER:
        raise ValueError(f"unknown direction {direction!r}")
    method = {"fractional": "average", "min": "min"}.get(ties)
    if method is None:
        raise ValueError(f"unknown tie rule {ties!r}")
    return rankdata(arr, method=method).tolist()


def resolve_weights(weights) -> tuple[float, float, float]:
    """Accept a preset name, a ``"w_od,w_oc,w_mae"`` string or a 3-tuple."""
    if isinstance(weights, str):
        if weights in WEIGHT_PRESETS:
            return WEIGHT_PRESETS[weights]
        try:
            weights = tuple(float(w) for w in weights.split(","))
        except ValueError:
            raise BadWeights(f"unknown weight preset {weights!r}") from None
    w = tuple(float(x) for x in weights)
    if len(w) != 3:
        raise BadWeights(f"expected three weights (od, oc, mae), got {len(w)}")
    if any(not math.isfinite(x) or x < 0 for x in w):
        raise BadWeights(f"weights must be finite and nonnegative: {w}")
    if abs(sum(w) - 1.0) > 1e-9:
        raise BadWeights(f"weights must sum to 1, got {sum(w)}")
    return w


def segmentation_score(ranks, weights) -> float:
    r_od, r_oc, r_mae = ranks
    w_od, w_oc, w_mae = resolve_weights(weights)
    return w_od * r_od + w_oc * r_oc + w_mae * r_mae


# Both weight pairs are whole tenths. Scaling to integers and dividing once
# gives the correctly rounded result, so offline_score(3, 1) is exactly 1.8.
_OFFLINE_TENTHS = (4, 6)
_FINAL_TENTHS = (3, 7)


def offline_score(r_class: float, r_segm: float) -> float:
    return (_OFFLINE_TENTHS[0] * r_class + _OFFLINE_TENTHS[1] * r_segm) / 10


def final_score(r_val: float, r_test: float) -> float:
    return (_FINAL_TENTHS[0] * r_val + _FINAL_TENTHS[1] * r_test) / 10


@dataclass(frozen=True)
class MetricRow:
    team_id: str
    mean_dice_od: float
    mean_dice_oc: float
    mean_abs_error: float
    auc: float | None = None


@dataclass(frozen=True)
class LeaderboardRow:
    team_id: str
    r_dice_od: float
    r_dice_oc: float
    r_mae: float
    s_segm: float
    r_segm: int
    position: int
    r_class: float | None = None
    s_val: float | None = None


@dataclass(frozen=True)
class Leaderboard:
    rows: tuple[LeaderboardRow, ...]
    weights: tuple[float, float, float]
    preset: str
    tie_break: str

    def by_team(self) -> dict[str, LeaderboardRow]:
        return {r.team_id: r for r in self.rows}


@dataclass(frozen=True)
class FinalRow:
    team_id: str
    r_val: int
    r_test: int
    s_final: float
    position: int


def _validate_rows(rows) -> list[MetricRow]:
    rows = list(rows)
    if not rows:
        raise IncompleteRow("metric table is empty")
    seen = set()
    for row in rows:
        if row.team_id in seen:
            raise IncompleteRow(f"duplicate team id {row.team_id!r}")
        seen.add(row.team_id)
        for name in ("mean_dice_od", "mean_dice_oc", "mean_abs_error"):
            value = getattr(row, name)
            if value is None or not math.isfinite(value):
                raise IncompleteRow(f"team {row.team_id!r}: {name} missing or non-finite")
        if row.auc is not None and not math.isfinite(row.auc):
            raise IncompleteRow(f"team {row.team_id!r}: auc non-finite")
    return rows


def preset_name(weights) -> str:
    if isinstance(weights, str) and weights in WEIGHT_PRESETS:
        return weights
    w = resolve_weights(weights)
    for name, preset in WEIGHT_PRESETS.items():
        if preset == w:
            return name
    return "custom"


def build_leaderboard(rows, weights=DEFAULT_PRESET, use_auc: bool | None = None) -> Leaderboard:
    """Rank teams on each metric and combine the ranks.

    Segmentation positions follow ascending ``s_segm``. When every row
    carries an AUC (or ``use_auc`` is set), classification ranks and the
    offline score ``s_val`` are added and the overall position follows
    ascending ``s_val`` instead.
    """
    rows = _validate_rows(rows)
    w = resolve_weights(weights)
    has_auc = all(r.auc is not None for r in rows)
    if use_auc is None:
        use_auc = has_auc
    elif use_auc and not has_auc:
        missing = [r.team_id for r in rows if r.auc is None]
        raise IncompleteRow(f"auc missing for: {', '.join(missing)}")

    r_od = rank_by([r.mean_dice_od for r in rows], HIGHER_BETTER)
    r_oc = rank_by([r.mean_dice_oc for r in rows], HIGHER_BETTER)
    r_mae = rank_by([r.mean_abs_error for r in rows], LOWER_BETTER)
    s_segm = [segmentation_score(ranks, w) for ranks in zip(r_od, r_oc, r_mae)]
    segm_key = {
        i: (s_segm[i], r_mae[i], r_od[i], rows[i].team_id) for i in range(len(rows))
    }
    segm_order = sorted(range(len(rows)), key=segm_key.__getitem__)
    r_segm = {i: pos for pos, i in enumerate(segm_order, start=1)}

    r_class = s_val = None
    order = segm_order
    if use_auc:
        r_class = rank_by([r.auc for r in rows], HIGHER_BETTER)
        s_val = [offline_score(r_class[i], r_segm[i]) for i in range(len(rows))]
        order = sorted(range(len(rows)), key=lambda i: (s_val[i],) + (r_segm[i],) + segm_key[i][1:])

    board = []
    for pos, i in enumerate(order, start=1):
        board.append(
            LeaderboardRow(
                team_id=rows[i].team_id,
                r_dice_od=r_od[i],
                r_dice_oc=r_oc[i],
                r_mae=r_mae[i],
                s_segm=s_segm[i],
                r_segm=r_segm[i],
                position=pos,
                r_class=None if r_class is None else r_class[i],
                s_val=None if s_val is None else s_val[i],
            )
        )
    return Leaderboard(
        rows=tuple(board),
        weights=w,
        preset=preset_name(weights),
        tie_break=VAL_TIE_BREAK if use_auc else TIE_BREAK,
    )


def final_standings(offline: Leaderboard, onsite: Leaderboard) -> list[FinalRow]:
    """Combine offline and on-site leaderboard positions.

    Only teams present on both boards are ranked; ties in the final score go
    to the better on-site position, then team id.
    """
    val = {r.team_id: r.position for r in offline.rows}
    test = {r.team_id: r.position for r in onsite.rows}
    teams = sorted(set(val) & set(test))
    if not teams:
        raise IncompleteRow("no team appears on both leaderboards")
    scored = sorted(teams, key=lambda t: (final_score(val[t], test[t]), test[t], t))
    return [
        FinalRow(team_id=t, r_val=val[t], r_test=test[t], s_final=final_score(val[t], test[t]), position=p)
        for p, t in enumerate(scored, start=1)
    ]
