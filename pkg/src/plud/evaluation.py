"""Confusion matrices, per-class and macro precision/recall, top-k
variants, and F-scores, plus a report renderer.

Top-k convention: an item whose true class appears among its k
highest-probability labels counts on the diagonal; otherwise it counts
at (true, top-1 predicted). With k=1 this is the ordinary confusion
matrix. The convention only ever moves mass onto the diagonal, so
per-class recall at larger k dominates recall at k=1.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classifier import Prediction


@dataclass
class ConfusionMatrix:
    classes: list[str]
    counts: np.ndarray  # (C, C) ints, rows=true, cols=predicted
    k: int = 1

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        C = len(self.classes)
        if self.counts.shape != (C, C):
            raise ValueError("counts shape does not match the class list")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("true\\predicted," + ",".join(self.classes) + "\n")
        for i, name in enumerate(self.classes):
            out.write(name + "," + ",".join(str(int(v)) for v in self.counts[i]) + "\n")
        return out.getvalue()


def confusion(
    predictions: Sequence[Prediction],
    truth: Mapping[str, str],
    k: int = 1,
    classes: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Top-k confusion matrix over the given predictions."""
    if not predictions:
        raise ValueError("nothing to evaluate")
    if classes is None:
        seen = {label for p in predictions for label, _ in p.ranked}
        seen.update(truth[p.item_id] for p in predictions if p.item_id in truth)
        classes = sorted(seen)
    classes = list(classes)
    C = len(classes)
    if not 1 <= k <= C:
        raise ValueError(f"k={k} outside [1, {C}]")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((C, C), dtype=np.int64)
    for p in predictions:
        if p.item_id not in truth:
            raise KeyError(f"no truth for item {p.item_id}")
        true_label = truth[p.item_id]
        top_labels = [label for label, _ in p.ranked[:k]]
        if true_label in top_labels:
            predicted = true_label
        else:
            predicted = p.ranked[0][0]
        counts[index[true_label], index[predicted]] += 1
    return ConfusionMatrix(classes=classes, counts=counts, k=k)


def precision_recall(cm: ConfusionMatrix) -> dict[str, tuple[float, float]]:
    """Per-class (precision, recall); empty rows/columns score 0."""
    col_sums = cm.counts.sum(axis=0)
    row_sums = cm.counts.sum(axis=1)
    out = {}
    for i, name in enumerate(cm.classes):
        diag = float(cm.counts[i, i])
        precision = diag / col_sums[i] if col_sums[i] > 0 else 0.0
        recall = diag / row_sums[i] if row_sums[i] > 0 else 0.0
        out[name] = (precision, recall)
    return out


def macro_average(values: Sequence[float]) -> float:
    """Unweighted mean over classes."""
    if not len(values):
        raise ValueError("macro average over an empty class list")
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean 2PR/(P+R), zero when both rates are zero."""
    if precision < 0 or recall < 0:
        raise ValueError("precision and recall must be non-negative")
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    classes: list[str]
    n_items: int
    per_k: dict[int, dict] = field(default_factory=dict)
    # per_k[k] = {"precision": {class: pct}, "recall": {class: pct},
    #             "ap": pct, "ar": pct, "f": pct, "accuracy": pct}

    def summary(self) -> dict:
        out = {"n": self.n_items}
        for k, block in sorted(self.per_k.items()):
            out[f"accuracy_top{k}"] = round(block["accuracy"], 4)
            out[f"ap_top{k}"] = round(block["ap"], 4)
            out[f"ar_top{k}"] = round(block["ar"], 4)
            out[f"f_top{k}"] = round(block["f"], 4)
        return out

    def to_json(self) -> str:
        doc = {
            "classes": self.classes,
            "n_items": self.n_items,
            "per_k": {
                str(k): {
                    "precision": {c: round(v, 4) for c, v in blk["precision"].items()},
                    "recall": {c: round(v, 4) for c, v in blk["recall"].items()},
                    "ap": round(blk["ap"], 4),
                    "ar": round(blk["ar"], 4),
                    "f": round(blk["f"], 4),
                    "accuracy": round(blk["accuracy"], 4),
                }
                for k, blk in sorted(self.per_k.items())
            },
        }
        return json.dumps(doc, indent=2)

    def to_text(self) -> str:
        """Aligned table: per-class columns plus the macro column."""
        width = max(8, max((len(c) for c in self.classes), default=8) + 1)
        lines = []
        header = " " * 12 + "".join(f"{c:>{width}}" for c in self.classes)
        for kind, macro_name, macro_key in (
            ("precision", "AP", "ap"),
            ("recall", "AR", "ar"),
        ):
            lines.append(f"{kind.capitalize()} (%)")
            lines.append(header + f"{macro_name:>{width}}")
            for k, blk in sorted(self.per_k.items()):
                row = f"  top-{k:<6}"
                row += "".join(
                    f"{blk[kind][c]:>{width}.2f}" for c in self.classes
                )
                row += f"{blk[macro_key]:>{width}.2f}"
                lines.append(row)
        frow = "F-score (%)  " + "  ".join(
            f"top-{k}: {blk['f']:.2f}" for k, blk in sorted(self.per_k.items())
        )
        arow = "Accuracy (%) " + "  ".join(
            f"top-{k}: {blk['accuracy']:.2f}" for k, blk in sorted(self.per_k.items())
        )
        lines.append(frow)
        lines.append(arow)
        lines.append(f"Items        {self.n_items}")
        return "\n".join(lines) + "\n"


def report(
    predictions: Sequence[Prediction],
    truth: Mapping[str, str],
    ks: Sequence[int] = (1, 3),
    classes: Sequence[str] | None = None,
) -> MetricsReport:
    """Full metrics report over the given predictions and ground truth."""
    if not predictions:
        raise ValueError("nothing to evaluate")
    if classes is None:
        seen = {label for p in predictions for label, _ in p.ranked}
        seen.update(truth[p.item_id] for p in predictions if p.item_id in truth)
        classes = sorted(seen)
    classes = list(classes)
    rep = MetricsReport(classes=classes, n_items=len(predictions))
    for k in ks:
        k_eff = min(k, len(classes))
        cm = confusion(predictions, truth, k=k_eff, classes=classes)
        pr = precision_recall(cm)
        precisions = {c: pr[c][0] * 100.0 for c in classes}
        recalls = {c: pr[c][1] * 100.0 for c in classes}
        ap = macro_average(list(precisions.values()))
        ar = macro_average(list(recalls.values()))
        rep.per_k[k] = {
            "precision": precisions,
            "recall": recalls,
            "ap": ap,
            "ar": ar,
            "f": f_score(ap, ar),
            "accuracy": cm.accuracy * 100.0,
        }
    return rep
