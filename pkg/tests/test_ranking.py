import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE5, table5_rows
from refuge_eval.errors import BadWeights, IncompleteRow, NonFiniteValue
from refuge_eval.ranking import (
    HIGHER_BETTER,
    LOWER_BETTER,
    MetricRow,
    build_leaderboard,
    final_score,
    final_standings,
    offline_score,
    rank_by,
    resolve_weights,
    segmentation_score,
)


def rank_oracle(values, higher_better=True):
    """Fractional rank by counting: 1 + #strictly better + (#ties - 1) / 2."""
    out = []
    for v in values:
        better = sum(1 for u in values if (u > v if higher_better else u < v))
        same = sum(1 for u in values if u == v)
        out.append(1 + better + (same - 1) / 2)
    return out


def test_rank_by_examples():
    assert rank_by([0.9, 0.8, 0.8, 0.7]) == [1, 2.5, 2.5, 4]
    assert rank_by([0.9, 0.8, 0.8, 0.7], ties="min") == [1, 2, 2, 4]
    assert rank_by([0.05, 0.04], LOWER_BETTER) == [2, 1]
    assert rank_by([3.0]) == [1]
    with pytest.raises(NonFiniteValue):
        rank_by([1.0, float("nan")])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=15), st.booleans())
def test_rank_by_matches_counting(values, higher):
    direction = HIGHER_BETTER if higher else LOWER_BETTER
    ranks = rank_by(values, direction)
    assert ranks == rank_oracle(values, higher)
    assert sum(ranks) == len(values) * (len(values) + 1) / 2


def test_segmentation_score_examples():
    assert segmentation_score((1, 2, 2), "table5") == pytest.approx(1.75, abs=1e-12)
    assert segmentation_score((7, 1, 1), "table5") == pytest.approx(2.5, abs=1e-12)
    assert segmentation_score((7, 1, 1), "eq3") == pytest.approx(3.1, abs=1e-12)
    assert segmentation_score((1, 2, 2), "eq3") == pytest.approx(1.65, abs=1e-12)


def test_offline_and_final_scores():
    assert offline_score(3, 1) == pytest.approx(1.8, abs=1e-12)
    assert final_score(2, 1) == pytest.approx(1.3, abs=1e-12)


def test_published_leaderboard_reproduces():
    board = build_leaderboard(table5_rows())
    assert board.preset == "table5"
    assert [r.team_id for r in board.rows] == [t[0] for t in TABLE5]
    for row, (_, score, *_rest) in zip(board.rows, TABLE5):
        assert abs(row.s_segm - score) <= 1e-9
    smile = board.by_team()["SMILEDeepDR"]
    assert (smile.r_dice_oc, smile.r_dice_od, smile.r_mae) == (8, 9, 6)


def test_eq3_weights_change_scores():
    board = build_leaderboard(table5_rows(), "eq3")
    teams = board.by_team()
    assert teams["CUHKMED"].s_segm == pytest.approx(1.65, abs=1e-12)
    assert teams["Masker"].s_segm == pytest.approx(3.10, abs=1e-12)
    assert board.preset == "eq3"


def test_resolve_weights():
    assert resolve_weights("0.2,0.3,0.5") == (0.2, 0.3, 0.5)
    assert resolve_weights((1, 0, 0)) == (1.0, 0.0, 0.0)
    for bad in ("0.5,0.5,0.5", (0.5, 0.6, -0.1), (0.5, 0.5), "nope"):
        with pytest.raises(BadWeights):
            resolve_weights(bad)


def _random_rows(rng, n, levels=5, with_auc=False):
    return [
        MetricRow(
            f"t{k:02d}",
            float(rng.integers(0, levels)) / levels,
            float(rng.integers(0, levels)) / levels,
            float(rng.integers(0, levels)) / levels,
            float(rng.integers(0, levels)) / levels if with_auc else None,
        )
        for k in range(n)
    ]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_leaderboard_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    rows = _random_rows(rng, int(rng.integers(1, 10)), with_auc=bool(rng.integers(2)))
    a = build_leaderboard(rows)
    b = build_leaderboard([rows[i] for i in rng.permutation(len(rows))])
    assert a == b


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scores_bounded_and_positions_complete(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    board = build_leaderboard(_random_rows(rng, n, with_auc=True))
    assert sorted(r.position for r in board.rows) == list(range(1, n + 1))
    for r in board.rows:
        assert 1 - 1e-12 <= r.s_segm <= n + 1e-12
        assert 1 - 1e-12 <= r.s_val <= n + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_keeps_ranks(seed):
    rng = np.random.default_rng(seed)
    rows = _random_rows(rng, 8)
    squashed = [MetricRow(r.team_id, r.mean_dice_od ** 3, np.sqrt(r.mean_dice_oc), 10 * r.mean_abs_error + 1)
                for r in rows]
    assert build_leaderboard(rows).rows == build_leaderboard(squashed).rows


def test_single_metric_weights_follow_that_metric():
    rng = np.random.default_rng(2)
    rows = _random_rows(rng, 9, levels=100)
    board = build_leaderboard(rows, (0, 0, 1))
    for r in board.rows:
        assert r.s_segm == r.r_mae


def test_tie_break_chain():
    rows = [
        MetricRow("b", 0.9, 0.8, 0.05),
        MetricRow("a", 0.9, 0.8, 0.05),
        MetricRow("c", 0.8, 0.9, 0.05),
    ]
    board = build_leaderboard(rows, (0.5, 0.5, 0.0))
    # all score 2.0 with equal MAE ranks; c loses on disc rank, a/b split by id
    assert [r.team_id for r in board.rows] == ["a", "b", "c"]


def test_single_team_scores_one():
    board = build_leaderboard([MetricRow("solo", 0.5, 0.5, 0.5, 0.5)])
    row = board.rows[0]
    assert (row.s_segm, row.s_val, row.position) == (1.0, 1.0, 1)


def test_offline_position_uses_auc():
    rows = [MetricRow("x", 0.9, 0.9, 0.01, 0.5), MetricRow("y", 0.8, 0.8, 0.02, 0.99)]
    board = build_leaderboard(rows)
    teams = board.by_team()
    assert teams["x"].s_val == pytest.approx(0.4 * 2 + 0.6 * 1)
    assert teams["y"].s_val == pytest.approx(0.4 * 1 + 0.6 * 2)
    assert [r.team_id for r in board.rows] == ["x", "y"]


def test_final_standings():
    offline = build_leaderboard([MetricRow(t, v, v, 1 - v) for t, v in (("a", 0.9), ("b", 0.8), ("c", 0.7))])
    onsite = build_leaderboard([MetricRow(t, v, v, 1 - v) for t, v in (("a", 0.7), ("b", 0.9), ("c", 0.8))])
    final = final_standings(offline, onsite)
    scores = {r.team_id: r.s_final for r in final}
    assert scores == pytest.approx({"a": 0.3 + 2.1, "b": 0.6 + 0.7, "c": 0.9 + 1.4})
    assert [r.team_id for r in final] == ["b", "c", "a"]


def test_leaderboard_errors():
    good = MetricRow("a", 0.9, 0.8, 0.05)
    with pytest.raises(IncompleteRow):
        build_leaderboard([good, good])
    with pytest.raises(IncompleteRow):
        build_leaderboard([MetricRow("a", float("nan"), 0.8, 0.05)])
    with pytest.raises(IncompleteRow):
        build_leaderboard([])
    with pytest.raises(IncompleteRow):
        build_leaderboard([good, MetricRow("b", 0.9, 0.8, 0.05, 0.7)], use_auc=True)


def test_all_weight_combinations_sum_of_ranks():
    # weighted sum of ranks over teams equals (n+1)/2 * n for any valid weights
    rows = table5_rows()
    n = len(rows)
    for w in itertools.product((0.0, 0.2, 0.5), repeat=2):
        weights = (w[0], w[1], 1 - w[0] - w[1])
        if weights[2] < 0:
            continue
        board = build_leaderboard(rows, weights)
        assert sum(r.s_segm for r in board.rows) == pytest.approx(n * (n + 1) / 2, abs=1e-9)
