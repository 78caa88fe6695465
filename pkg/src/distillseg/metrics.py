"""Pixel-level segmentation metrics and split evaluation.

Micro metrics pool confusion counts over every pixel of a split before
computing ratios, which keeps them meaningful under heavy class imbalance
(foreground landforms cover only a few percent of each scene). Macro metrics
average the foreground- and background-as-positive values. mIoU here is the
two-class pixel definition, flagged as ``miou_def=two_class_pixel`` in every
report so downstream readers know which convention they are looking at.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errors
from .data import Manifest, sample_gt

# Published comparison rows (macro F1, accuracy, macro precision, macro recall).
# The baseline is an instance-detection model evaluated by its own authors;
# its metric basis may differ from our pixel-level numbers, so reports print
# both rows with an explicit caveat instead of implying commensurability.
REFERENCE_ROWS = {
    "mask_rcnn_405_labels": {
        "macro_f1": 0.811, "accuracy": 0.774,
        "macro_precision": 0.952, "macro_recall": 0.706,
    },
    "distilled_decoder_budget_5": {
        "macro_f1": 0.86, "accuracy": 0.96,
        "macro_precision": 0.89, "macro_recall": 0.93,
    },
}
REFERENCE_CAVEAT = "metric basis may differ between rows (pixel vs instance level)"

CURVE_CSV_HEADER = [
    "budget", "micro_p", "micro_r", "micro_f1", "accuracy", "miou",
    "mean_image_iou", "macro_p", "macro_r", "macro_f1",
]


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel confusion counts with foreground as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass
class MetricsReport:
    """Per-split metric bundle; every ratio lies in [0, 1]."""

    micro_precision: float
    micro_recall: float
    micro_f1: float
    accuracy: float
    miou: float
    mean_image_iou: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_image: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=lambda: {
        "miou_def": "two_class_pixel",
        "accuracy_def": "pixel",
        "reference_caveat": REFERENCE_CAVEAT,
    })

    def to_dict(self) -> dict:
        return {
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "accuracy": self.accuracy,
            "miou": self.miou,
            "mean_image_iou": self.mean_image_iou,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_image": self.per_image,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(**{k: doc[k] for k in (
            "micro_precision", "micro_recall", "micro_f1", "accuracy", "miou",
            "mean_image_iou", "macro_precision", "macro_recall", "macro_f1")},
            per_image=doc.get("per_image", []),
            notes=doc.get("notes", {}))


def _check_same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise errors.ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")


def confusion_counts(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Count per-pixel agreement between boolean masks."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    _check_same_shape(pred, gt)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(np.count_nonzero(~pred & ~gt))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _safe_div(num: float, den: float) -> float:
    # 0/0 convention: 0 for precision/recall
    return num / den if den > 0 else 0.0


def micro_metrics(counts: ConfusionCounts) -> tuple[float, float, float, float]:
    """Return (precision, recall, f1, accuracy) from pooled counts."""
    p = _safe_div(counts.tp, counts.tp + counts.fp)
    r = _safe_div(counts.tp, counts.tp + counts.fn)
    f1 = _safe_div(2 * p * r, p + r)
    acc = _safe_div(counts.tp + counts.tn, counts.total)
    return p, r, f1, acc


def macro_metrics(counts: ConfusionCounts) -> tuple[float, float, float]:
    """Two-class macro (precision, recall, f1): averages fg and bg as positive."""
    fg_p = _safe_div(counts.tp, counts.tp + counts.fp)
    fg_r = _safe_div(counts.tp, counts.tp + counts.fn)
    fg_f1 = _safe_div(2 * fg_p * fg_r, fg_p + fg_r)
    # background as positive class: swap roles of the counts
    bg_p = _safe_div(counts.tn, counts.tn + counts.fn)
    bg_r = _safe_div(counts.tn, counts.tn + counts.fp)
    bg_f1 = _safe_div(2 * bg_p * bg_r, bg_p + bg_r)
    return (fg_p + bg_p) / 2, (fg_r + bg_r) / 2, (fg_f1 + bg_f1) / 2


def image_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Foreground IoU for one image; 1.0 when both masks are empty."""
    c = confusion_counts(pred, gt)
    denom = c.tp + c.fp + c.fn
    return c.tp / denom if denom > 0 else 1.0


def mean_image_iou(pairs) -> float:
    """Mean of per-image foreground IoUs over (pred, gt) pairs."""
    ious = [image_iou(pred, gt) for pred, gt in pairs]
    if not ious:
        raise errors.EmptyList("no mask pairs")
    return float(np.mean(ious))


def miou(counts: ConfusionCounts) -> float:
    """Two-class mean IoU from pooled counts; an absent class scores 1.0."""
    fg_den = counts.tp + counts.fp + counts.fn
    bg_den = counts.tn + counts.fp + counts.fn
    fg = counts.tp / fg_den if fg_den > 0 else 1.0
    bg = counts.tn / bg_den if bg_den > 0 else 1.0
    return (fg + bg) / 2


def report_from_counts(pooled: ConfusionCounts,
                       per_image: list[dict]) -> MetricsReport:
    """Assemble a MetricsReport from pooled counts plus per-image IoUs."""
    p, r, f1, acc = micro_metrics(pooled)
    mp, mr, mf1 = macro_metrics(pooled)
    mean_iou = float(np.mean([e["iou"] for e in per_image])) if per_image else 1.0
    return MetricsReport(
        micro_precision=p, micro_recall=r, micro_f1=f1, accuracy=acc,
        miou=miou(pooled), mean_image_iou=mean_iou,
        macro_precision=mp, macro_recall=mr, macro_f1=mf1,
        per_image=per_image)


def evaluate_masks(pairs: list[tuple[str, np.ndarray, np.ndarray]]) -> MetricsReport:
    """Evaluate (id, pred, gt) triples: pooled pixel metrics + per-image IoUs."""
    pooled = ConfusionCounts(0, 0, 0, 0)
    per_image = []
    for sample_id, pred, gt in pairs:
        c = confusion_counts(pred, gt)
        pooled = pooled + c
        denom = c.tp + c.fp + c.fn
        per_image.append({"id": sample_id,
                          "iou": c.tp / denom if denom > 0 else 1.0})
    return report_from_counts(pooled, per_image)


def evaluate_model(params, manifest: Manifest, split: str, tau: float,
                   gateway) -> MetricsReport:
    """Run the domain decoder over a split and score it against ground truth.

    ``gateway`` supplies embeddings (EncoderGateway or anything with an
    ``embedding(sample)`` method); predictions are thresholded at ``tau``.
    """
    from .decoder import binarize, decoder_forward

    samples = [s for s in manifest.samples if s.split == split]
    if not samples:
        raise errors.MissingGroundTruth(f"split {split!r} is empty")
    pairs = []
    for sample in samples:
        if sample.gt_mask_path is None:
            raise errors.MissingGroundTruth(sample.id)
        emb = gateway.embedding(sample)
        prob = decoder_forward(params, emb)
        pairs.append((sample.id, binarize(prob, tau), sample_gt(sample)))
    return evaluate_masks(pairs)


# -- curve rendering ----------------------------------------------------------

def _curve_rows(report_doc: dict) -> list[list]:
    rows = []
    for entry in report_doc["entries"]:
        m = entry["metrics"]
        rows.append([
            entry["budget"], m["micro_precision"], m["micro_recall"],
            m["micro_f1"], m["accuracy"], m["miou"], m["mean_image_iou"],
            m["macro_precision"], m["macro_recall"], m["macro_f1"],
        ])
    return rows


def emit_curve_plot(report_doc: dict, out: str | Path) -> Path:
    """Render metrics-vs-budget lines to ``out`` and a CSV next to it.

    ``report_doc`` is a curve report dict ({config, entries:[{budget,
    metrics, ...}]}). Returns the CSV path.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    entries = report_doc.get("entries", [])
    if not entries:
        raise errors.EmptyList("curve report has no entries")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)

    rows = _curve_rows(report_doc)
    budgets = [row[0] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, name in enumerate(CURVE_CSV_HEADER[1:], start=1):
        ax.plot(budgets, [row[col] for row in rows], marker="o", label=name)
    ax.set_xlabel("annotation budget (labelled training samples)")
    ax.set_ylabel("metric value")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Segmentation metrics vs annotation budget")
    ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    try:
        fig.savefig(out, bbox_inches="tight")
    except OSError as exc:
        raise errors.DistillsegError(f"failed to write plot: {exc}") from exc
    finally:
        plt.close(fig)

    csv_path = out.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_CSV_HEADER)
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
    return csv_path


def save_report(report: MetricsReport, path: str | Path,
                extra: dict | None = None) -> None:
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
