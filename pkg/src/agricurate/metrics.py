"""Pixel confusion matrices, F1 analytics, and the annotation-efficiency protocol."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .manifest import DatasetManifest
from .primitives import LabelMask, load_label_mask


def _check_class_table(class_table: dict[int, str]) -> int:
    k = len(class_table)
    if sorted(class_table) != list(range(k)):
        raise ConfigError("class table indices must be contiguous from 0")
    return k


@dataclass
class ConfusionMatrix:
    """K x K pixel counts; entry (i, j) = pixels with ground truth i predicted j."""

    counts: np.ndarray
    class_table: dict[int, str]

    @classmethod
    def zeros(cls, class_table: dict[int, str]) -> "ConfusionMatrix":
        k = _check_class_table(class_table)
        return cls(np.zeros((k, k), dtype=np.int64), dict(class_table))

    def validate(self) -> None:
        k = _check_class_table(self.class_table)
        if self.counts.shape != (k, k):
            raise DomainError(f"confusion matrix must be {k}x{k}")
        if (self.counts < 0).any():
            raise DomainError("confusion counts must be nonnegative")

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_table != other.class_table:
            raise DomainError("cannot merge confusion matrices with different class tables")
        return ConfusionMatrix(self.counts + other.counts, dict(self.class_table))


def accumulate(gt: LabelMask, pred: LabelMask, cm: ConfusionMatrix) -> ConfusionMatrix:
    """Add the per-pixel tally of (gt, pred) to cm; gt ignore pixels are skipped."""
    if gt.values.shape != pred.values.shape:
        raise DomainError("ground-truth and prediction dimensions differ")
    if gt.class_table != pred.class_table or gt.class_table != cm.class_table:
        raise DomainError("class tables differ")
    k = len(cm.class_table)
    valid = gt.values != gt.ignore_value
    g = gt.values[valid].astype(np.int64)
    p = pred.values[valid].astype(np.int64)
    if p.size and int(p.max()) >= k:
        raise DomainError("prediction contains values outside the class table")
    tally = np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(cm.counts + tally, dict(cm.class_table))


def f1_scores(cm: ConfusionMatrix) -> tuple[dict[str, float], float]:
    """Per-class and macro F1.

    F1 is 0 when a class's denominator vanishes but the class appears in gt or
    pred; classes absent from both are excluded.  The macro mean runs over
    classes present in ground truth.
    """
    cm.validate()
    counts = cm.counts
    if counts.sum() == 0:
        raise DomainError("confusion matrix is all zeros")
    tp = np.diag(counts).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)
    col = counts.sum(axis=0).astype(np.float64)
    denom = row + col                      # 2TP + FP + FN
    f1 = np.zeros(len(row))
    nz = denom > 0
    f1[nz] = 2.0 * tp[nz] / denom[nz]
    per_class = {cm.class_table[c]: float(f1[c])
                 for c in range(len(row)) if denom[c] > 0}
    macro = float(f1[row > 0].mean())
    return per_class, macro


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    per_class_f1: dict[str, float]
    macro_f1: float
    pixel_counts_gt: dict[str, int]
    model_tag: str = ""
    dataset_tag: str = ""

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, model_tag: str = "",
                       dataset_tag: str = "") -> "EvalReport":
        per_class, macro = f1_scores(cm)
        gt_counts = cm.counts.sum(axis=1)
        pixel_counts = {cm.class_table[c]: int(gt_counts[c])
                        for c in range(len(gt_counts))}
        return cls(confusion=cm, per_class_f1=per_class, macro_f1=macro,
                   pixel_counts_gt=pixel_counts, model_tag=model_tag,
                   dataset_tag=dataset_tag)

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "dataset_tag": self.dataset_tag,
            "class_table": {str(k): v for k, v in sorted(self.confusion.class_table.items())},
            "confusion": self.confusion.counts.tolist(),
            "per_class_f1": {c: round(v, 6) for c, v in sorted(self.per_class_f1.items())},
            "macro_f1": round(self.macro_f1, 6),
            "pixel_counts_gt": {c: v for c, v in sorted(self.pixel_counts_gt.items())},
        }

    def save(self, path) -> None:
        from .utils import dump_json

        dump_json(self.to_dict(), path)


def load_report(path) -> EvalReport:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    table = {int(k): v for k, v in raw["class_table"].items()}
    cm = ConfusionMatrix(np.asarray(raw["confusion"], dtype=np.int64), table)
    return EvalReport(confusion=cm,
                      per_class_f1=dict(raw["per_class_f1"]),
                      macro_f1=float(raw["macro_f1"]),
                      pixel_counts_gt=dict(raw["pixel_counts_gt"]),
                      model_tag=raw.get("model_tag", ""),
                      dataset_tag=raw.get("dataset_tag", ""))


def delta_report(report_a: EvalReport, report_b: EvalReport,
                 pixel_counts_train: dict[str, int]) -> list[tuple]:
    """Class-wise F1 change rows sorted ascending by training-pixel count.

    Row layout matches the CSV: (class, f1_a, f1_b, delta, train_pixels).
    """
    if report_a.confusion.class_table != report_b.confusion.class_table:
        raise DomainError("reports use different class tables")
    classes = sorted(set(report_a.per_class_f1) | set(report_b.per_class_f1))
    rows = []
    for cls in classes:
        f1_a = report_a.per_class_f1.get(cls, 0.0)
        f1_b = report_b.per_class_f1.get(cls, 0.0)
        rows.append((cls, f1_a, f1_b, f1_b - f1_a,
                     int(pixel_counts_train.get(cls, 0))))
    rows.sort(key=lambda r: (r[4], r[0]))
    return rows


def write_delta_csv(rows, path) -> None:
    lines = ["class,f1_a,f1_b,delta,train_pixels"]
    for cls, f1_a, f1_b, delta, pixels in rows:
        lines.append(f"{cls},{round(f1_a, 6)},{round(f1_b, 6)},{round(delta, 6)},{pixels}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def efficiency_subsets(manifest: DatasetManifest, per_collection, seed: int
                       ) -> list[DatasetManifest]:
    """Nested per-collection subsets drawn from one seeded permutation each.

    Subset k holds the first per_collection[k] ids of every collection's
    permutation, so larger subsets contain smaller ones and totals are
    count x number of collections.
    """
    groups = manifest.collections()
    if not groups:
        raise DomainError("manifest has no kept records")
    perms: dict[str, list[str]] = {}
    for collection, records in sorted(groups.items()):
        ids = sorted(r.id for r in records)
        rng = random.Random(f"{seed}:{collection}")
        rng.shuffle(ids)
        perms[collection] = ids
    subsets = []
    for count in per_collection:
        if count < 0:
            raise DomainError(f"subset count {count} is negative")
        chosen: set[str] = set()
        for collection, ids in perms.items():
            if count > len(ids):
                raise DomainError(f"count {count} exceeds collection "
                                  f"{collection!r} size {len(ids)}")
            chosen.update(ids[:count])
        subsets.append(DatasetManifest([r for r in manifest if r.id in chosen]))
    return subsets


def evaluate_dirs(gt_dir, pred_dir, class_table: dict[int, str],
                  model_tag: str = "", dataset_tag: str = "") -> EvalReport:
    """Accumulate confusion over all mask pairs matched by file name."""
    gt_dir, pred_dir = Path(gt_dir), Path(pred_dir)
    gt_files = {p.relative_to(gt_dir).as_posix(): p for p in sorted(gt_dir.rglob("*.png"))}
    pred_files = {p.relative_to(pred_dir).as_posix(): p for p in sorted(pred_dir.rglob("*.png"))}
    if not gt_files:
        raise ConfigError(f"no ground-truth masks under {gt_dir}")
    if set(gt_files) != set(pred_files):
        missing = sorted(set(gt_files) ^ set(pred_files))
        raise ConfigError(f"gt/pred file sets differ (first mismatch: {missing[0]})")
    cm = ConfusionMatrix.zeros(class_table)
    for name in sorted(gt_files):
        gt = load_label_mask(gt_files[name], class_table)
        pred = load_label_mask(pred_files[name], class_table)
        cm = accumulate(gt, pred, cm)
    return EvalReport.from_confusion(cm, model_tag=model_tag, dataset_tag=dataset_tag)
