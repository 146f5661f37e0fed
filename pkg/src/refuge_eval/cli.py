"""Command-line front end.

Exit codes: 0 success, 2 input validation failure (one line per problem on
stderr), 1 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import traceback
import warnings
from pathlib import Path

from . import __version__
from .cls_metrics import REFERENCE_SPECIFICITY, ScoreTable, roc_curve, sensitivity_at_specificity
from .ensemble import VoteConfig, average_scores, majority_vote, normalize_scores
from .errors import DegenerateInputWarning, ValidationError
from .formats import (
    ManifestEntry,
    SchemaError,
    csv_text,
    labels_csv,
    leaderboard_csv,
    leaderboard_doc,
    list_masks,
    load_mask,
    manifest_json,
    read_labels,
    read_manifest,
    read_metrics,
    read_scores,
    relpath_under,
    roc_json,
    roc_svg,
    save_mask,
    scores_csv,
    seg_scores_csv,
    write_text,
)
from .masks import Region, region_of
from .ranking import WEIGHT_PRESETS, build_leaderboard
from .seg_metrics import evaluate_segmentation
from .stats import (
    ALTERNATIVES,
    bonferroni,
    delong_test,
    kruskal_wallis,
    rank_sum,
    wilcoxon_signed_rank,
)
from .synth import SynthConfig, generate_ground_truth, team_scores, true_vcdr_scores

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


def _report(problems) -> int:
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    return EXIT_INVALID


# --- eval-seg ---------------------------------------------------------------

def _pair_masks(pred_dir, gt_dir, manifest):
    """Map image id -> (gt path, prediction path or None)."""
    if manifest is not None:
        entries = read_manifest(manifest)
        pairs = {}
        for e in entries:
            pred = relpath_under(pred_dir, e.prediction or e.mask)
            pairs[e.image_id] = (relpath_under(gt_dir, e.mask), pred if pred.is_file() else None)
        return pairs
    gt = list_masks(gt_dir)
    pred = list_masks(pred_dir)
    return {stem: (path, pred.get(stem)) for stem, path in gt.items()}


def cmd_eval_seg(pred_dir, gt_dir, out_path, manifest=None, strict=False,
                 od_includes_cup=True, workers=None) -> int:
    problems = []
    pairs = _pair_masks(pred_dir, gt_dir, manifest)
    if not pairs:
        return _report([f"{gt_dir}: no ground-truth masks found"])
    missing = sorted(i for i, (_, p) in pairs.items() if p is None)
    if missing:
        problems.append(f"missing prediction for {len(missing)} image(s): {', '.join(missing)}")
    truths, preds = {}, {}
    for image_id, (gt_path, pred_path) in sorted(pairs.items()):
        for store, path, what in ((truths, gt_path, "ground truth"), (preds, pred_path, "prediction")):
            if path is None:
                continue
            try:
                store[image_id] = load_mask(path, strict=strict)
            except (OSError, ValidationError) as exc:
                problems.append(f"{image_id}: {what} {path}: {exc}")
        if image_id in truths and image_id in preds and truths[image_id].shape != preds[image_id].shape:
            t, p = truths[image_id], preds[image_id]
            problems.append(f"{image_id}: prediction is {p.width}x{p.height}, ground truth {t.width}x{t.height}")
        if image_id in truths and not region_of(truths[image_id], Region.OD, od_includes_cup).any():
            problems.append(f"{image_id}: ground-truth optic disc region is empty")
    if problems:
        return _report(problems)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateInputWarning)
        summary = evaluate_segmentation(preds, truths, od_includes_cup=od_includes_cup, max_workers=workers)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_text(out_path, seg_scores_csv(summary))
    return EXIT_OK


# --- eval-class -------------------------------------------------------------

def cmd_eval_class(scores_csv_path, labels_csv_path, out_path, svg_path=None,
                   specificity=REFERENCE_SPECIFICITY) -> int:
    table = read_scores(scores_csv_path).with_labels(read_labels(labels_csv_path))
    curve = roc_curve(table)
    se = sensitivity_at_specificity(curve, specificity)
    write_text(out_path, roc_json(curve, specificity, se, table))
    if svg_path:
        write_text(svg_path, roc_svg(curve))
    return EXIT_OK


# --- rank -------------------------------------------------------------------

def _paired_outputs(out_path):
    out = Path(out_path)
    if out.suffix.lower() == ".json":
        return out.with_suffix(".csv"), out
    return out, out.with_suffix(".json")


def cmd_rank(metrics_path, weights="table5", out_path="leaderboard.csv") -> int:
    rows = read_metrics(metrics_path)
    board = build_leaderboard(rows, weights)
    doc = leaderboard_doc(board)
    if board.preset in WEIGHT_PRESETS:
        other = "table5" if board.preset == "eq3" else "eq3"
        alt = build_leaderboard(rows, other)
        alt_pos = {r.team_id: r.position for r in alt.rows}
        moved = [r.team_id for r in board.rows if alt_pos[r.team_id] != r.position]
        doc["alternative"] = {
            "preset": other,
            "s_segm": {r.team_id: r.s_segm for r in alt.rows},
            "positions": alt_pos,
        }
        doc["weight_discrepancy"] = {
            "note": "the textual segmentation formula weights disc Dice 0.35 and cup Dice 0.25; "
                    "the published leaderboard uses 0.25 / 0.35",
            "teams_with_different_position": moved,
        }
        if board.preset == "eq3":
            print("note: preset eq3 does not reproduce the published leaderboard scores; "
                  f"{len(moved)} team(s) change position under table5", file=sys.stderr)
    csv_path, json_path = _paired_outputs(out_path)
    write_text(csv_path, leaderboard_csv(board))
    write_text(json_path, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# --- ensemble ---------------------------------------------------------------

def cmd_ensemble(inputs, mode, out_path, threshold=0.5, inclusive=False, strict=False) -> int:
    inputs = [Path(p) for p in inputs]
    if len(inputs) < 2:
        return _report([f"ensemble needs at least 2 inputs, got {len(inputs)}"])
    if mode == "scores":
        tables = [read_scores(p) for p in inputs]
        ids = tables[0].image_ids
        problems = [f"{p}: image ids differ from {inputs[0]}" for p, t in zip(inputs[1:], tables[1:])
                    if t.image_ids != ids]
        if problems:
            return _report(problems)
        normalized = []
        for p, t in zip(inputs, tables):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DegenerateInputWarning)
                normalized.append(normalize_scores(t))
            if caught:
                print(f"warning: {p}: constant likelihoods normalized to 0.5", file=sys.stderr)
        write_text(out_path, scores_csv(average_scores(normalized)))
        return EXIT_OK
    if mode != "masks":
        return _report([f"unknown ensemble mode {mode!r}"])

    listings = [list_masks(p) for p in inputs]
    stems = set(listings[0])
    problems = []
    for p, listing in zip(inputs[1:], listings[1:]):
        if set(listing) != stems:
            missing = sorted(stems - set(listing))
            extra = sorted(set(listing) - stems)
            problems.append(f"{p}: mask set differs from {inputs[0]} (missing {missing[:10]}, extra {extra[:10]})")
    if not stems:
        problems.append(f"{inputs[0]}: no masks found")
    if problems:
        return _report(problems)
    cfg = VoteConfig(threshold, inclusive)
    fused = {}
    for stem in sorted(stems):
        masks = []
        for listing in listings:
            try:
                masks.append(load_mask(listing[stem], strict=strict))
            except (OSError, ValidationError) as exc:
                problems.append(f"{listing[stem]}: {exc}")
        if len(masks) == len(listings):
            if len({m.shape for m in masks}) > 1:
                problems.append(f"{stem}: mask dimensions differ across inputs")
            else:
                fused[stem] = majority_vote(masks, cfg)
    if problems:
        return _report(problems)
    out_dir = Path(out_path)
    for stem, mask in fused.items():
        save_mask(out_dir / f"{stem}.bmp", mask)
    return EXIT_OK


# --- stats ------------------------------------------------------------------

STATS_COLUMNS = ("name", "test", "statistic", "z_or_chi2", "p_value", "method", "n_effective",
                 "alternative", "alpha", "bonferroni_m", "adjusted_alpha", "significant", "flags")
TESTS = ("wilcoxon_signed_rank", "rank_sum", "kruskal_wallis", "delong")


def _read_table(path):
    path = Path(path)
    try:
        lines = [l for l in path.read_text(encoding="utf-8").splitlines()
                 if l.strip() and not l.lstrip().startswith("#")]
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaError(path, [f"cannot read data: {exc}"]) from None
    reader = csv.DictReader(lines)
    return reader.fieldnames or [], list(reader)


def _numeric(rows, column, where, problems):
    values = []
    for k, row in enumerate(rows, start=2):
        text = (row.get(column) or "").strip()
        if text == "":
            values.append(None)
            continue
        try:
            v = float(text)
        except ValueError:
            problems.append(f"{where}: row {k} column {column!r}: {text!r} is not a number")
            values.append(None)
            continue
        if not math.isfinite(v):
            problems.append(f"{where}: row {k} column {column!r} is not finite")
        values.append(v)
    return values


def _groups(rows, spec, fields, where, problems):
    """Samples named by ``columns`` or split by ``group_column``."""
    columns = spec.get("columns") or []
    missing = [c for c in columns + [spec.get("group_column")] if c and c not in fields]
    if missing:
        problems.append(f"{where}: unknown column(s) {missing}")
        return []
    group_col = spec.get("group_column")
    if group_col:
        if len(columns) != 1:
            problems.append(f"{where}: group_column needs exactly one value column")
            return []
        values = _numeric(rows, columns[0], where, problems)
        keys = [(row.get(group_col) or "").strip() for row in rows]
        order = [str(g) for g in spec.get("groups") or sorted({k for k in keys if k})]
        return [[v for v, k in zip(values, keys) if k == g and v is not None] for g in order]
    return [[v for v in _numeric(rows, c, where, problems) if v is not None] for c in columns]


def _run_one(spec, fields, rows, where, problems):
    test = spec.get("test")
    if test not in TESTS:
        problems.append(f"{where}: unknown test {test!r} (expected one of {', '.join(TESTS)})")
        return None
    alternative = spec.get("alternative", "two_sided")
    if alternative not in ALTERNATIVES:
        problems.append(f"{where}: unknown alternative {alternative!r}")
        return None
    n_before = len(problems)
    if test == "wilcoxon_signed_rank":
        columns = spec.get("columns") or []
        if len(columns) != 2 or any(c not in fields for c in columns):
            problems.append(f"{where}: signed-rank needs two existing columns, got {columns}")
            return None
        x = _numeric(rows, columns[0], where, problems)
        y = _numeric(rows, columns[1], where, problems)
        for k, (a, b) in enumerate(zip(x, y), start=2):
            if (a is None) != (b is None):
                problems.append(f"{where}: row {k} has only one of the paired values")
        if len(problems) > n_before:
            return None
        pairs = [(a, b) for a, b in zip(x, y) if a is not None]
        return wilcoxon_signed_rank([a for a, _ in pairs], [b for _, b in pairs], alternative)
    if test == "delong":
        columns = spec.get("columns") or []
        label_col = spec.get("label_column")
        if len(columns) != 2 or label_col not in fields or any(c not in fields for c in columns):
            problems.append(f"{where}: delong needs two score columns and a label_column")
            return None
        a = _numeric(rows, columns[0], where, problems)
        b = _numeric(rows, columns[1], where, problems)
        labels = [(row.get(label_col) or "").strip() for row in rows]
        bad = [k for k, l in enumerate(labels, start=2) if l not in ("0", "1")]
        if bad:
            problems.append(f"{where}: rows {bad[:10]} have labels other than 0/1")
        if any(v is None for v in a + b):
            problems.append(f"{where}: delong score columns must be complete")
        if len(problems) > n_before:
            return None
        ids = [str(k) for k in range(len(rows))]
        y = [int(l) for l in labels]
        return delong_test(ScoreTable(ids, a, y), ScoreTable(ids, b, y))
    samples = _groups(rows, spec, fields, where, problems)
    if len(problems) > n_before:
        return None
    if test == "rank_sum":
        if len(samples) != 2:
            problems.append(f"{where}: rank_sum needs exactly two samples, got {len(samples)}")
            return None
        return rank_sum(samples[0], samples[1], alternative)
    return kruskal_wallis(samples)


def cmd_stats(request_path, out_path=None) -> int:
    request_path = Path(request_path)
    try:
        request = json.loads(request_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return _report([f"{request_path}: cannot parse request: {exc}"])
    if not isinstance(request, dict) or "data" not in request or not isinstance(request.get("tests"), list):
        return _report([f"{request_path}: request needs 'data' and a 'tests' list"])
    base = request_path.parent
    if out_path is None:
        if not request.get("output"):
            return _report([f"{request_path}: no output path given"])
        out_path = relpath_under(base, request["output"])
    fields, rows = _read_table(relpath_under(base, request["data"]))
    problems, results = [], []
    for k, spec in enumerate(request["tests"]):
        where = f"tests[{k}]"
        if not isinstance(spec, dict):
            problems.append(f"{where}: must be an object")
            continue
        name = str(spec.get("name", f"test{k}"))
        try:
            alpha = float(spec.get("alpha", 0.05))
            m = spec.get("bonferroni_m", 1)
            adjusted = bonferroni(alpha, m)
            result = _run_one(spec, fields, rows, where, problems)
        except ValidationError as exc:
            problems.append(f"{where}: {exc}")
            continue
        except (TypeError, ValueError) as exc:
            problems.append(f"{where}: {exc}")
            continue
        if result is None:
            continue
        results.append([
            name, spec["test"], repr(float(result.statistic)), repr(float(result.z_or_chi2)),
            repr(float(result.p_value)), result.method, result.n_effective,
            spec.get("alternative", "two_sided"), repr(alpha), int(m), repr(adjusted),
            int(result.p_value < adjusted), ";".join(sorted(result.flags)),
        ])
    if problems:
        return _report(problems)
    write_text(out_path, csv_text("stats", STATS_COLUMNS, results))
    return EXIT_OK


# --- synth ------------------------------------------------------------------

def load_synth_config(path, seed=None) -> SynthConfig:
    if path in (None, "default", "-"):
        data = {}
    else:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise SchemaError(path, [f"cannot parse config: {exc}"]) from None
        if not isinstance(data, dict):
            raise SchemaError(path, ["config must be a JSON object"])
    if seed is not None:
        data["seed"] = seed
    return SynthConfig.from_dict(data)


def cmd_synth(config_path, out_dir, seed=None) -> int:
    cfg = load_synth_config(config_path, seed)
    cohort = generate_ground_truth(cfg)
    out = Path(out_dir)
    write_text(out / "config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    entries = [ManifestEntry(im.image_id, f"{im.image_id}.bmp", im.label) for im in cohort.images]
    write_text(out / "manifest.json", manifest_json(entries))
    write_text(out / "labels.csv", labels_csv(cohort.labels))
    for i, im in enumerate(cohort.images):
        save_mask(out / "gt" / f"{im.image_id}.bmp", cohort.ground_truth(i))
        for k, team in enumerate(cfg.teams):
            save_mask(out / "teams" / team.name / f"{im.image_id}.bmp", cohort.prediction(k, i))
    for k, team in enumerate(cfg.teams):
        table = team_scores(cohort, k)
        write_text(out / "scores" / f"{team.name}.csv", scores_csv(table))
    write_text(out / "scores" / "vcdr_true.csv", scores_csv(true_vcdr_scores(cohort)))
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refuge-eval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-seg", help="score OD/OC masks against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("-o", "--out", required=True, help="per-image CSV with a trailing mean row")
    p.add_argument("--manifest", help="JSON manifest pairing ids with mask filenames")
    p.add_argument("--strict-masks", action="store_true", help="reject gray values other than 0/128/255")
    p.add_argument("--od-rim-only", action="store_true", help="count only label 128 as optic disc")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=lambda a: cmd_eval_seg(a.pred_dir, a.gt_dir, a.out, a.manifest, a.strict_masks,
                                               not a.od_rim_only, a.workers))

    p = sub.add_parser("eval-class", help="ROC, AUC and reference sensitivity of a likelihood table")
    p.add_argument("scores")
    p.add_argument("labels")
    p.add_argument("-o", "--out", required=True, help="JSON report")
    p.add_argument("--svg", help="write the ROC curve as SVG")
    p.add_argument("--specificity", type=float, default=REFERENCE_SPECIFICITY)
    p.set_defaults(func=lambda a: cmd_eval_class(a.scores, a.labels, a.out, a.svg, a.specificity))

    p = sub.add_parser("rank", help="build a leaderboard from per-team metric means")
    p.add_argument("metrics")
    p.add_argument("--weights", default="table5", help="eq3, table5, or w_od,w_oc,w_mae")
    p.add_argument("-o", "--out", required=True, help="leaderboard CSV (JSON written alongside)")
    p.set_defaults(func=lambda a: cmd_rank(a.metrics, a.weights, a.out))

    p = sub.add_parser("ensemble", help="fuse mask directories or score tables")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--mode", choices=("masks", "scores"), required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5, help="vote fraction to exceed")
    p.add_argument("--inclusive", action="store_true", help="reaching the threshold suffices")
    p.add_argument("--strict-masks", action="store_true")
    p.set_defaults(func=lambda a: cmd_ensemble(a.inputs, a.mode, a.out, a.threshold, a.inclusive, a.strict_masks))

    p = sub.add_parser("stats", help="run hypothesis tests described in a JSON request")
    p.add_argument("request")
    p.add_argument("-o", "--out")
    p.set_defaults(func=lambda a: cmd_stats(a.request, a.out))

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("config", help="JSON config file, or 'default'")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=lambda a: cmd_synth(a.config, a.out_dir, a.seed))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        return _report(f"{exc.path}: {p}" for p in exc.problems)
    except ValidationError as exc:
        return _report([str(exc)])
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
