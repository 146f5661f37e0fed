"""Nonparametric tests: Wilcoxon signed-rank and rank-sum, Kruskal-Wallis,
DeLong's paired AUC comparison and Bonferroni adjustment.

Small samples use exact null distributions (counted by dynamic programming);
larger ones fall back to normal or chi-squared approximations with tie
correction. Two-sided exact p-values double the smaller tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .cls_metrics import ScoreTable
from .errors import (
    DegenerateLabels,
    EmptyGroup,
    EmptySample,
    IdMismatch,
    LengthMismatch,
    TooFewGroups,
    ValidationError,
)

EXACT_MAX_N = 12
ALTERNATIVES = ("two_sided", "greater", "less")
_P_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    z_or_chi2: float
    p_value: float
    method: str
    n_effective: int
    flags: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class DeLongResult(TestResult):
    auc_a: float = math.nan
    auc_b: float = math.nan
    variance: float = math.nan  # of auc_a - auc_b


def _clip_p(p: float) -> float:
    return float(min(1.0, max(_P_FLOOR, p)))


def _check_alternative(alternative: str):
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _tail_p(lower: float, upper: float, alternative: str) -> float:
    """p from P(T <= t) and P(T >= t); 'greater' means large T is extreme."""
    if alternative == "greater":
        return _clip_p(upper)
    if alternative == "less":
        return _clip_p(lower)
    return _clip_p(2.0 * min(lower, upper))


def _normal_p(diff: float, sd: float, alternative: str, continuity: bool) -> tuple[float, float]:
    """(z, p) for an observed deviation ``diff`` from the null mean."""
    cc = 0.5 if continuity else 0.0
    if sd <= 0:
        return 0.0, 1.0
    if alternative == "greater":
        z = (diff - cc) / sd
        return z, _clip_p(norm.sf(z))
    if alternative == "less":
        z = (diff + cc) / sd
        return z, _clip_p(norm.cdf(z))
    z = math.copysign(max(abs(diff) - cc, 0.0), diff) / sd
    return z, _clip_p(2.0 * norm.sf(abs(z)))


def _tie_sizes(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts[counts > 1].astype(float)


def _subset_sum_counts(weights, k: int | None = None) -> np.ndarray:
    """Number of subsets (of size ``k`` if given) reaching each integer sum."""
    weights = [int(w) for w in weights]
    total = sum(weights)
    if k is None:
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for w in weights:
            counts[w:] = counts[w:] + counts[: total + 1 - w].copy()
        return counts
    table = np.zeros((k + 1, total + 1))
    table[0, 0] = 1.0
    for w in weights:
        for j in range(k, 0, -1):
            table[j, w:] += table[j - 1, : total + 1 - w]
    return table[k]


def wilcoxon_signed_rank(x, y, alternative: str = "two_sided", continuity: bool = True) -> TestResult:
    """Paired signed-rank test of x against y; zero differences are dropped.

    ``statistic`` is min(W+, W-). ``alternative="greater"`` asks whether x
    tends to exceed y.
    """
    _check_alternative(alternative)
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise LengthMismatch(f"paired samples differ in length: {x.size} vs {y.size}")
    if x.size == 0:
        raise EmptySample("paired samples are empty")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        return TestResult(0.0, 0.0, 1.0, "exact", 0, frozenset({"all_zero_differences"}))
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    ties = _tie_sizes(np.abs(d))
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
    z, p_approx = _normal_p(w_plus - mean, math.sqrt(var), alternative, continuity)
    statistic = min(w_plus, w_minus)
    if n <= EXACT_MAX_N and ties.size == 0:
        counts = _subset_sum_counts(range(1, n + 1))
        total = 2.0 ** n
        w = int(round(w_plus))
        lower = counts[: w + 1].sum() / total
        upper = counts[w:].sum() / total
        return TestResult(statistic, z, _tail_p(lower, upper, alternative), "exact", n)
    return TestResult(statistic, z, p_approx, "normal_approx", n)


def rank_sum(a, b, alternative: str = "two_sided", continuity: bool = True) -> TestResult:
    """Wilcoxon rank-sum / Mann-Whitney test of unpaired samples.

    ``statistic`` is U for sample ``a``; ``alternative="greater"`` asks whether
    ``a`` tends to exceed ``b``.
    """
    _check_alternative(alternative)
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise EmptySample(f"both samples must be nonempty (sizes {a.size}, {b.size})")
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    ranks = rankdata(np.r_[a, b])
    offset = n_a * (n_a + 1) / 2.0
    u = float(ranks[:n_a].sum() - offset)
    ties = _tie_sizes(ranks)
    mean = n_a * n_b / 2.0
    var = n_a * n_b / 12.0 * ((n + 1) - np.sum(ties ** 3 - ties) / (n * (n - 1))) if n > 1 else 0.0
    z, p_approx = _normal_p(u - mean, math.sqrt(max(var, 0.0)), alternative, continuity)
    if n <= EXACT_MAX_N:
        # midranks are multiples of 1/2, so doubled ranks are integers
        doubled = np.rint(2 * ranks).astype(int)
        counts = _subset_sum_counts(doubled, n_a)
        total = counts.sum()
        observed = int(doubled[:n_a].sum())
        lower = counts[: observed + 1].sum() / total
        upper = counts[observed:].sum() / total
        return TestResult(u, z, _tail_p(lower, upper, alternative), "exact", n)
    return TestResult(u, z, p_approx, "normal_approx", n)


def kruskal_wallis(groups) -> TestResult:
    """H test across k groups with a chi-squared (k - 1 df) p-value."""
    groups = [np.asarray(g, dtype=float).reshape(-1) for g in groups]
    if len(groups) < 2:
        raise TooFewGroups(f"need at least 2 groups, got {len(groups)}")
    for i, g in enumerate(groups):
        if g.size == 0:
            raise EmptyGroup(f"group {i} is empty")
    sizes = np.array([g.size for g in groups], dtype=float)
    n = sizes.sum()
    ranks = rankdata(np.concatenate(groups))
    bounds = np.r_[0, np.cumsum(sizes).astype(int)]
    rank_sums = np.array([ranks[bounds[i]:bounds[i + 1]].sum() for i in range(len(groups))])
    ties = _tie_sizes(ranks)
    correction = 1.0 - np.sum(ties ** 3 - ties) / (n ** 3 - n) if n > 1 else 0.0
    df = len(groups) - 1
    if correction <= 0:
        return TestResult(0.0, 0.0, 1.0, "chi2_approx", int(n), frozenset({"all_tied"}))
    h = (12.0 / (n * (n + 1)) * np.sum(rank_sums ** 2 / sizes) - 3.0 * (n + 1)) / correction
    h = float(max(h, 0.0))
    return TestResult(h, h, _clip_p(chi2.sf(h, df)), "chi2_approx", int(n))


def _structural_components(pos: np.ndarray, neg: np.ndarray):
    """Per-positive and per-negative placement values of the AUC kernel."""
    m, n = pos.size, neg.size
    joint = rankdata(np.r_[pos, neg])
    v10 = (joint[:m] - rankdata(pos)) / n
    v01 = 1.0 - (joint[m:] - rankdata(neg)) / m
    return v10, v01


def _cov(u: np.ndarray, v: np.ndarray) -> float:
    # a single observation carries no spread information
    if u.size < 2:
        return 0.0
    return float(np.cov(u, v, ddof=1)[0, 1])


def delong_test(scores_a: ScoreTable, scores_b: ScoreTable) -> DeLongResult:
    """Paired comparison of two correlated AUCs on the same labeled images."""
    if scores_a.image_ids != scores_b.image_ids:
        raise IdMismatch("score tables cover different images")
    if scores_a.labels is None or scores_b.labels is None:
        raise DegenerateLabels("both score tables need labels")
    if not np.array_equal(scores_a.labels, scores_b.labels):
        raise IdMismatch("score tables disagree on labels")
    pos_a, neg_a = scores_a.split()
    pos_b, neg_b = scores_b.split()
    m, n = pos_a.size, neg_a.size
    v10_a, v01_a = _structural_components(pos_a, neg_a)
    v10_b, v01_b = _structural_components(pos_b, neg_b)
    auc_a, auc_b = float(v10_a.mean()), float(v10_b.mean())
    var = (
        (_cov(v10_a, v10_a) + _cov(v10_b, v10_b) - 2 * _cov(v10_a, v10_b)) / m
        + (_cov(v01_a, v01_a) + _cov(v01_b, v01_b) - 2 * _cov(v01_a, v01_b)) / n
    )
    diff = auc_a - auc_b
    if var <= 1e-15:
        if abs(diff) <= 1e-15:
            z, p, flags = 0.0, 1.0, frozenset({"zero_variance"})
        else:
            z, p, flags = math.copysign(math.inf, diff), _P_FLOOR, frozenset({"zero_variance"})
        return DeLongResult(diff, z, p, "normal_approx", m + n, flags, auc_a, auc_b, max(var, 0.0))
    z = diff / math.sqrt(var)
    return DeLongResult(diff, z, _clip_p(2.0 * norm.sf(abs(z))), "normal_approx", m + n,
                        frozenset(), auc_a, auc_b, var)


def bonferroni(alpha: float, m: int) -> float:
    """Per-comparison significance level for ``m`` comparisons."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if int(m) != m or m < 1:
        raise ValidationError(f"number of comparisons must be a positive integer, got {m}")
    return alpha / int(m)
