"""On-disk formats: mask directories, CSV tables, manifests, JSON reports, SVG plots.

Every CSV the toolkit writes starts with a ``# refuge-eval <kind> v<N>``
comment line; readers skip ``#`` lines, so outputs can be fed back in.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .cls_metrics import RocCurve, ScoreTable
from .errors import ValidationError
from .masks import LabelMask, decode_mask, encode_mask
from .ranking import Leaderboard, MetricRow
from .seg_metrics import SegScore, SegSummary, summarize

SCHEMA_VERSION = 1
MANIFEST_VERSION = "1"
SUMMARY_ID = "__mean__"
SEG_COLUMNS = ("image_id", "dice_od", "dice_oc", "vcdr_pred", "vcdr_true", "abs_error")
METRIC_COLUMNS = ("team_id", "mean_dice_od", "mean_dice_oc", "mean_abs_error")
MASK_SUFFIXES = (".bmp",)


class SchemaError(ValidationError):
    """A file failed validation; ``problems`` holds one message per finding."""

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        super().__init__(f"{self.path}: " + "; ".join(self.problems[:5]))


def fmt(x: float) -> str:
    """Shortest round-trip float text, locale independent."""
    x = float(x)
    if x == 0:
        return "0.0"
    return repr(x)


def _header(kind: str) -> str:
    return f"# refuge-eval {kind} v{SCHEMA_VERSION}\n"


def write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def csv_text(kind: str, header, rows) -> str:
    buf = _io.StringIO()
    buf.write(_header(kind))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_csv_rows(path, required, optional=()):
    """Yield ``(line_number, row_dict)``; raise SchemaError on header problems."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaError(path, [f"cannot read file: {exc}"]) from None
    numbered = [(i, line) for i, line in enumerate(text.splitlines(), start=1)
                if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise SchemaError(path, ["file has no header row"])
    reader = csv.reader([line for _, line in numbered])
    header = [h.strip() for h in next(reader)]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(path, [f"line {numbered[0][0]}: missing column(s) {', '.join(missing)}"])
    unknown = [c for c in header if c not in required and c not in optional]
    if unknown:
        raise SchemaError(path, [f"line {numbered[0][0]}: unexpected column(s) {', '.join(unknown)}"])
    rows = []
    for (lineno, _), values in zip(numbered[1:], reader):
        if len(values) != len(header):
            rows.append((lineno, None))
            continue
        rows.append((lineno, {h: v.strip() for h, v in zip(header, values)}))
    return rows


def _parse_float(text, what, lineno, problems):
    try:
        value = float(text)
    except ValueError:
        problems.append(f"line {lineno}: {what} {text!r} is not a number")
        return None
    if not math.isfinite(value):
        problems.append(f"line {lineno}: {what} {text!r} is not finite")
        return None
    return value


def _unique_id(value, seen, lineno, problems, what="image_id"):
    if not value:
        problems.append(f"line {lineno}: empty {what}")
        return False
    if value in seen:
        problems.append(f"line {lineno}: duplicate {what} {value!r}")
        return False
    seen.add(value)
    return True


def read_scores(path) -> ScoreTable:
    rows = read_csv_rows(path, ("image_id", "likelihood"))
    problems, seen, ids, values = [], set(), [], []
    for lineno, row in rows:
        if row is None:
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        value = _parse_float(row["likelihood"], "likelihood", lineno, problems)
        if _unique_id(row["image_id"], seen, lineno, problems) and value is not None:
            ids.append(row["image_id"])
            values.append(value)
    if not rows:
        problems.append("no data rows")
    if problems:
        raise SchemaError(path, problems)
    return ScoreTable(ids, values)


def read_labels(path) -> dict[str, int]:
    rows = read_csv_rows(path, ("image_id", "label"))
    problems, seen, labels = [], set(), {}
    for lineno, row in rows:
        if row is None:
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        if row["label"] not in ("0", "1"):
            problems.append(f"line {lineno}: label {row['label']!r} must be 0 or 1")
            continue
        if _unique_id(row["image_id"], seen, lineno, problems):
            labels[row["image_id"]] = int(row["label"])
    if not rows:
        problems.append("no data rows")
    if problems:
        raise SchemaError(path, problems)
    return labels


def scores_csv(table: ScoreTable) -> str:
    return csv_text("scores", ("image_id", "likelihood"),
                     [(i, fmt(p)) for i, p in zip(table.image_ids, table.likelihoods)])


def labels_csv(labels: dict) -> str:
    return csv_text("labels", ("image_id", "label"), [(i, int(labels[i])) for i in sorted(labels)])


def read_metrics(path) -> list[MetricRow]:
    rows = read_csv_rows(path, METRIC_COLUMNS, optional=("auc",))
    problems, seen, out = [], set(), []
    for lineno, row in rows:
        if row is None:
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        if not _unique_id(row["team_id"], seen, lineno, problems, what="team_id"):
            continue
        values = {}
        for col in METRIC_COLUMNS[1:]:
            if row[col] == "":
                problems.append(f"line {lineno}: {col} missing for team {row['team_id']!r}")
                values[col] = None
            else:
                values[col] = _parse_float(row[col], col, lineno, problems)
        auc = row.get("auc", "")
        values["auc"] = _parse_float(auc, "auc", lineno, problems) if auc else None
        out.append(MetricRow(row["team_id"], **values))
    if not rows:
        problems.append("no team rows")
    if problems:
        raise SchemaError(path, problems)
    return out


def metrics_csv(rows) -> str:
    with_auc = any(r.auc is not None for r in rows)
    header = METRIC_COLUMNS + (("auc",) if with_auc else ())
    body = []
    for r in rows:
        line = [r.team_id, fmt(r.mean_dice_od), fmt(r.mean_dice_oc), fmt(r.mean_abs_error)]
        if with_auc:
            line.append("" if r.auc is None else fmt(r.auc))
        body.append(line)
    return csv_text("metrics", header, body)


def seg_scores_csv(summary: SegSummary) -> str:
    body = [
        (s.image_id, fmt(s.dice_od), fmt(s.dice_oc), fmt(s.vcdr_pred), fmt(s.vcdr_true), fmt(s.abs_error))
        for s in summary.per_image
    ]
    n = len(summary.per_image)
    body.append((
        SUMMARY_ID,
        fmt(summary.mean_dice_od),
        fmt(summary.mean_dice_oc),
        fmt(sum(s.vcdr_pred for s in summary.per_image) / n),
        fmt(sum(s.vcdr_true for s in summary.per_image) / n),
        fmt(summary.mean_abs_error),
    ))
    return csv_text("seg-scores", SEG_COLUMNS, body)


def read_seg_scores(path, team_id: str = "") -> SegSummary:
    rows = read_csv_rows(path, SEG_COLUMNS)
    problems, scores = [], []
    for lineno, row in rows:
        if row is None:
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        if row["image_id"] == SUMMARY_ID:
            continue
        vals = [_parse_float(row[c], c, lineno, problems) for c in SEG_COLUMNS[1:]]
        if None not in vals:
            scores.append(SegScore(row["image_id"], *vals))
    if problems or not scores:
        raise SchemaError(path, problems or ["no per-image rows"])
    return summarize(team_id, scores)


def roc_json(curve: RocCurve, specificity: float, sensitivity: float, table: ScoreTable) -> str:
    pos = int((table.labels == 1).sum())
    doc = {
        "schema": f"refuge-eval/classification/{SCHEMA_VERSION}",
        "n_images": len(table),
        "n_positive": pos,
        "n_negative": len(table) - pos,
        "auc": curve.auc,
        "reference_specificity": specificity,
        "sensitivity_at_specificity": sensitivity,
        "roc": [
            {"fpr": f, "tpr": t, "threshold": None if math.isinf(th) else th}
            for f, t, th in curve.points
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def roc_svg(curve: RocCurve, size: int = 400, margin: int = 50, title: str = "ROC") -> str:
    """Standalone SVG: ROC polyline, chance diagonal, ticks every 0.25."""
    span = size - 2 * margin

    def px(f):
        return margin + f * span

    def py(t):
        return size - margin - t * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>{title}</title>",
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(1)}" y2="{py(1)}" stroke="gray" stroke-dasharray="4 4"/>',
    ]
    for k in range(5):
        v = k * 0.25
        parts.append(f'<line class="xtick" x1="{px(v):.2f}" y1="{py(0)}" x2="{px(v):.2f}" y2="{py(0) + 5}" stroke="black"/>')
        parts.append(f'<text x="{px(v):.2f}" y="{py(0) + 18}" font-size="10" text-anchor="middle">{v:.2f}</text>')
        parts.append(f'<line class="ytick" x1="{px(0) - 5}" y1="{py(v):.2f}" x2="{px(0)}" y2="{py(v):.2f}" stroke="black"/>')
        parts.append(f'<text x="{px(0) - 8}" y="{py(v) + 3:.2f}" font-size="10" text-anchor="end">{v:.2f}</text>')
    points = " ".join(f"{px(f):.3f},{py(t):.3f}" for f, t in zip(curve.fpr, curve.tpr))
    parts.append(f'<polyline fill="none" stroke="blue" stroke-width="2" points="{points}"/>')
    parts.append(f'<text x="{size / 2}" y="{size - 12}" font-size="12" text-anchor="middle">1 - specificity</text>')
    parts.append(
        f'<text x="14" y="{size / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {size / 2})">sensitivity</text>'
    )
    parts.append(f'<text x="{size / 2}" y="{margin - 15}" font-size="12" text-anchor="middle">AUC = {curve.auc:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def leaderboard_csv(board: Leaderboard) -> str:
    with_class = board.rows and board.rows[0].s_val is not None
    header = ["position", "team_id", "s_segm", "r_dice_od", "r_dice_oc", "r_mae", "r_segm"]
    if with_class:
        header += ["r_class", "s_val"]
    body = []
    for r in board.rows:
        line = [r.position, r.team_id, fmt(r.s_segm), fmt(r.r_dice_od), fmt(r.r_dice_oc), fmt(r.r_mae), r.r_segm]
        if with_class:
            line += [fmt(r.r_class), fmt(r.s_val)]
        body.append(line)
    return csv_text("leaderboard", header, body)


def leaderboard_doc(board: Leaderboard) -> dict:
    return {
        "schema": f"refuge-eval/leaderboard/{SCHEMA_VERSION}",
        "preset": board.preset,
        "weights": dict(zip(("dice_od", "dice_oc", "mae"), board.weights)),
        "tie_break": board.tie_break,
        "teams": [
            {k: v for k, v in vars(r).items() if v is not None or k in ("r_class", "s_val")}
            for r in board.rows
        ],
    }


# --- mask directories -------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    mask: str
    label: int | None = None
    prediction: str | None = None


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise SchemaError(path, [f"cannot parse manifest: {exc}"]) from None
    problems, entries, seen = [], [], set()
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise SchemaError(path, ["manifest must be an object with an 'images' list"])
    if str(doc.get("format_version", "")) != MANIFEST_VERSION:
        problems.append(f"unsupported format_version {doc.get('format_version')!r}")
    for k, item in enumerate(doc["images"]):
        if not isinstance(item, dict) or "image_id" not in item or "mask" not in item:
            problems.append(f"images[{k}]: needs image_id and mask")
            continue
        image_id = str(item["image_id"])
        if image_id in seen:
            problems.append(f"images[{k}]: duplicate image_id {image_id!r}")
            continue
        seen.add(image_id)
        label = item.get("label")
        if label is not None and label not in (0, 1):
            problems.append(f"images[{k}]: label must be 0 or 1")
            continue
        entries.append(ManifestEntry(image_id, str(item["mask"]), label, item.get("prediction")))
    if problems:
        raise SchemaError(path, problems)
    return entries


def manifest_json(entries) -> str:
    images = []
    for e in entries:
        item = {"image_id": e.image_id, "mask": e.mask}
        if e.label is not None:
            item["label"] = e.label
        if e.prediction is not None:
            item["prediction"] = e.prediction
        images.append(item)
    return json.dumps({"format_version": MANIFEST_VERSION, "images": images}, indent=2) + "\n"


def list_masks(directory) -> dict[str, Path]:
    """Mask files in a directory keyed by filename stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SchemaError(directory, ["not a directory"])
    return {
        p.stem: p for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in MASK_SUFFIXES
    }


def load_mask(path, strict: bool = False) -> LabelMask:
    with open(path, "rb") as fh:
        return decode_mask(fh.read(), strict=strict)


def save_mask(path, mask: LabelMask):
    write_bytes(path, encode_mask(mask))


def relpath_under(base, name) -> Path:
    base = Path(base)
    p = Path(name)
    return p if p.is_absolute() else base / p


def tree_digest(root) -> dict[str, str]:
    """SHA-256 of every file under ``root`` keyed by relative path."""
    root = Path(root)
    out = {}
    for dirpath, _, files in sorted(os.walk(root)):
        for f in sorted(files):
            p = Path(dirpath) / f
            out[p.relative_to(root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out
