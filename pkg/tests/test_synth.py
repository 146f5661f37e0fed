import math
from dataclasses import replace

import numpy as np
import pytest

from refuge_eval.cls_metrics import auc_mann_whitney
from refuge_eval.errors import InfeasibleConfig, OutOfBounds
from refuge_eval.masks import decode_mask, encode_mask
from refuge_eval.seg_metrics import dice, vcdr, vertical_diameter
from refuge_eval.synth import (
    EllipseParams,
    PredictionNoise,
    SynthConfig,
    TeamSpec,
    generate_classifier_scores,
    generate_ground_truth,
    perturb_prediction,
    rasterize_ellipse,
    rng_for,
    team_scores,
    true_vcdr_scores,
)

SMALL = SynthConfig(n_images=60, seed=9)


@pytest.fixture(scope="module")
def cohort():
    return generate_ground_truth(SMALL)


def test_subpixel_ellipse_is_one_pixel():
    region = rasterize_ellipse(EllipseParams(4, 3, 0.4, 0.4), 9, 7)
    assert region.sum() == 1 and region[3, 4]


@pytest.mark.parametrize("semi_v", [3.0, 5.5, 10.7, 20.2])
def test_upright_diameter(semi_v):
    region = rasterize_ellipse(EllipseParams(30, 30, 6.3, semi_v), 61, 61)
    assert vertical_diameter(region) == 2 * math.floor(semi_v) + 1


def test_quarter_turn_swaps_axes():
    upright = rasterize_ellipse(EllipseParams(30, 30, 7.3, 12.6), 61, 61)
    turned = rasterize_ellipse(EllipseParams(30, 30, 12.6, 7.3, math.pi / 2), 61, 61)
    assert np.array_equal(upright, turned)


def test_out_of_bounds_rejected():
    with pytest.raises(OutOfBounds):
        rasterize_ellipse(EllipseParams(2, 10, 5, 5), 20, 20)
    # touching the half-pixel margin is allowed
    assert rasterize_ellipse(EllipseParams(4.5, 10, 5, 5), 20, 20)[10, 0]


def test_streams_are_independent_and_reproducible():
    a = rng_for(1, 2, 3).random(4)
    assert np.array_equal(a, rng_for(1, 2, 3).random(4))
    assert not np.array_equal(a, rng_for(1, 2, 4).random(4))
    assert not np.array_equal(a, rng_for(1, 3, 3).random(4))


def test_generation_is_deterministic(cohort):
    again = generate_ground_truth(SMALL)
    assert again.images == cohort.images
    for i in (0, 17, 59):
        assert again.ground_truth(i) == cohort.ground_truth(i)
        assert again.prediction(2, i) == cohort.prediction(2, i)
    other = generate_ground_truth(replace(SMALL, seed=10))
    assert other.images != cohort.images


def test_default_prevalence_is_exact():
    labels = generate_ground_truth(SynthConfig(n_images=400)).labels
    assert len(labels) == 400 and sum(labels.values()) == 40


def test_vcdr_lies_in_class_interval(cohort):
    cfg = cohort.config
    for i, im in enumerate(cohort.images):
        lo, hi = cfg.vcdr_glaucoma if im.label else cfg.vcdr_normal
        measured = vcdr(cohort.ground_truth(i))
        assert measured == im.vcdr
        assert lo <= measured <= hi


def test_every_mask_has_cup_and_rim(cohort):
    for i in range(len(cohort.images)):
        for mask in (cohort.ground_truth(i), cohort.prediction(3, i)):
            labels = mask.labels
            assert (labels == 0).any() and (labels == 128).any()


def test_zero_noise_is_exact(cohort):
    for i in range(10):
        assert cohort.prediction(0, i) == cohort.ground_truth(i)


def test_dice_drops_with_axis_noise(cohort):
    means = []
    for sigma in (0.0, 2.0, 8.0):
        noise = PredictionNoise(axis=sigma)
        scores = []
        for i in range(40):
            im = cohort.images[i]
            pred = perturb_prediction((im.disc, im.cup), noise, rng_for(0, 50, i), 160, 160)
            gt = cohort.ground_truth(i)
            scores.append(dice(pred.labels != 255, gt.labels != 255))
        means.append(float(np.mean(scores)))
    assert means[0] == 1.0
    assert means[0] > means[1] > means[2]


def test_classifier_score_separation():
    labels = {f"i{k:05d}": int(k % 2) for k in range(10_000)}
    flat = generate_classifier_scores(labels, 0.0, rng_for(3, 0))
    assert abs(auc_mann_whitney(flat) - 0.5) <= 0.02
    sharp = generate_classifier_scores({k: labels[k] for k in list(labels)[:400]}, 10.0, rng_for(3, 1))
    assert auc_mann_whitney(sharp) > 0.99
    assert ((flat.likelihoods >= 0) & (flat.likelihoods <= 1)).all()


def test_team_score_ordering_and_true_vcdr(cohort):
    aucs = [auc_mann_whitney(team_scores(cohort, k)) for k in range(len(cohort.config.teams))]
    assert aucs[0] > aucs[-1]
    assert auc_mann_whitney(true_vcdr_scores(cohort)) > 0.9


def test_masks_survive_bmp_roundtrip(cohort):
    for i in range(5):
        gt = cohort.ground_truth(i)
        assert decode_mask(encode_mask(gt), strict=True) == gt


@pytest.mark.parametrize(
    "changes",
    [
        {"n_images": 0},
        {"prevalence": 1.0},
        {"vcdr_normal": (0.6, 0.3)},
        {"width": 30},
        {"teams": (TeamSpec("x"), TeamSpec("x"))},
        {"cup_offset": 0.99},
    ],
)
def test_infeasible_configs(changes):
    with pytest.raises(InfeasibleConfig):
        generate_ground_truth(replace(SMALL, **changes))


def test_unreachable_vcdr_reported():
    with pytest.raises(InfeasibleConfig):
        generate_ground_truth(replace(SMALL, n_images=3, disc_semi_v=(2.0, 2.5), vcdr_normal=(0.41, 0.42),
                                      vcdr_glaucoma=(0.41, 0.42)))


def test_config_dict_roundtrip():
    cfg = replace(SMALL, teams=(TeamSpec("t", PredictionNoise(1.0, 2.0, 0.1), 2.5),))
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(InfeasibleConfig):
        SynthConfig.from_dict({"bogus": 1})
