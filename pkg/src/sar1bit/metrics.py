"""Classification and reconstruction metrics from first principles.

All classification numbers derive from a C x C confusion matrix with rows
indexing the actual class and columns the predicted class. Macro averages
are unweighted means over classes; 0/0 ratios are reported as 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_precision: float = field(init=False)
    macro_recall: float = field(init=False)
    macro_f1: float = field(init=False)

    def __post_init__(self):
        self.macro_precision = float(self.precision.mean())
        self.macro_recall = float(self.recall.mean())
        self.macro_f1 = float(self.f1.mean())


def confusion(preds, labels, num_classes: int) -> np.ndarray:
    """Count matrix M[actual][predicted]."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"preds {preds.shape} vs labels {labels.shape}")
    if preds.size and (preds.min() < 0 or preds.max() >= num_classes):
        raise ValueError(f"prediction out of range [0, {num_classes})")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (labels, preds), 1)
    return m


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def report(m: np.ndarray) -> MetricReport:
    """Accuracy plus one-vs-rest precision/recall/F1 per class and macro."""
    m = np.asarray(m, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {m.shape}")
    total = m.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(m).astype(np.float64)
    support = m.sum(axis=1)
    predicted = m.sum(axis=0)
    precision = _safe_div(tp, predicted.astype(np.float64))
    recall = _safe_div(tp, support.astype(np.float64))
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return MetricReport(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
    )


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical images give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


# -- serialization -------------------------------------------------------------


def report_csv(rep: MetricReport, class_names: list[str] | None = None) -> str:
    """One row per class plus a macro row: class,precision,recall,f1,support."""
    names = class_names or [f"class{i}" for i in range(len(rep.support))]
    buf = io.StringIO()
    buf.write("class,precision,recall,f1,support\n")
    for i, name in enumerate(names):
        buf.write(f"{name},{rep.precision[i]:.6f},{rep.recall[i]:.6f},{rep.f1[i]:.6f},{rep.support[i]}\n")
    buf.write(f"macro,{rep.macro_precision:.6f},{rep.macro_recall:.6f},{rep.macro_f1:.6f},{rep.support.sum()}\n")
    buf.write(f"accuracy,{rep.accuracy:.6f},,,\n")
    return buf.getvalue()


def report_text(rep: MetricReport, class_names: list[str] | None = None) -> str:
    names = class_names or [f"class{i}" for i in range(len(rep.support))]
    width = max(len(n) for n in names + ["macro"])
    lines = [f"{'class':<{width}}  precision  recall  f1      support"]
    for i, name in enumerate(names):
        lines.append(
            f"{name:<{width}}  {rep.precision[i]:9.4f}  {rep.recall[i]:6.4f}  {rep.f1[i]:6.4f}  {rep.support[i]:7d}"
        )
    lines.append(
        f"{'macro':<{width}}  {rep.macro_precision:9.4f}  {rep.macro_recall:6.4f}  {rep.macro_f1:6.4f}  {rep.support.sum():7d}"
    )
    lines.append(f"accuracy {rep.accuracy:.4f}")
    return "\n".join(lines) + "\n"


def confusion_csv(m: np.ndarray, class_names: list[str] | None = None) -> str:
    names = class_names or [f"class{i}" for i in range(m.shape[0])]
    buf = io.StringIO()
    buf.write("actual\\predicted," + ",".join(names) + "\n")
    for i, name in enumerate(names):
        buf.write(name + "," + ",".join(str(int(v)) for v in m[i]) + "\n")
    return buf.getvalue()


def load_confusion_csv(text: str) -> np.ndarray:
    """Parse a confusion matrix CSV (header row/column optional)."""
    rows = []
    for line in text.strip().splitlines():
        cells = [c.strip() for c in line.split(",") if c.strip() != ""]
        if not cells:
            continue
        try:
            rows.append([int(float(c)) for c in cells])
        except ValueError:
            try:
                rows.append([int(float(c)) for c in cells[1:]])
            except ValueError:
                continue  # header line
    m = np.array(rows, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"parsed matrix is not square: {m.shape}")
    return m
