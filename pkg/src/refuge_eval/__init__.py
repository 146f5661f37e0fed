"""Evaluation toolkit for optic disc/cup segmentation and glaucoma classification
benchmarks: metrics, leaderboards, ensembles, significance tests and synthetic cohorts."""

__version__ = "0.1.0"

from .masks import LabelMask, PixelLabel, Region, decode_mask, encode_mask, region_of
from .seg_metrics import SegScore, SegSummary, dice, evaluate_segmentation, vcdr, vertical_diameter
from .cls_metrics import (
    OperatingPoint,
    RocCurve,
    ScoreTable,
    agreement,
    auc_mann_whitney,
    operating_point,
    roc_curve,
    sensitivity_at_specificity,
)
from .ranking import (
    Leaderboard,
    MetricRow,
    build_leaderboard,
    final_score,
    final_standings,
    offline_score,
    rank_by,
    segmentation_score,
)
from .ensemble import VoteConfig, average_scores, majority_vote, normalize_scores
from .stats import (
    DeLongResult,
    TestResult,
    bonferroni,
    delong_test,
    kruskal_wallis,
    rank_sum,
    wilcoxon_signed_rank,
)
from .synth import (
    EllipseParams,
    PredictionNoise,
    SynthConfig,
    SynthCohort,
    TeamSpec,
    generate_classifier_scores,
    generate_ground_truth,
    perturb_prediction,
    rasterize_ellipse,
)
