"""Evaluation metrics over per-frame class predictions.

Rows of a confusion matrix are true classes, columns predicted classes.
Classes whose row and column are both zero never occur and are excluded from
every per-class mean. Undefined ratios are ``None`` (printed as n/a) and are
skipped by macro means; the number of skipped classes is reported.

AvACC is the mean one-vs-rest binary accuracy over the included classes and
CBA the mean of ``C_ii / max(rowsum_i, colsum_i)``.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from workflowaug.exceptions import ConfigError, MetricsError
from workflowaug.models import LabelTrack

logger = logging.getLogger(__name__)


# ---------- Data Structures ----------

@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int64
    labels: tuple  # class id per row/column

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise MetricsError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.labels)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}


@dataclass(frozen=True)
class OverallMetrics:
    acc: float
    avacc: float
    cba: float
    macro_precision: Optional[float]
    macro_recall: Optional[float]
    macro_f1: Optional[float]
    included: tuple = ()
    excluded: tuple = ()
    precision_skipped: int = 0
    recall_skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BinaryMetrics:
    tp: int
    fn: int
    fp: int
    tn: int
    acc: float
    precision: Optional[float]
    recall: Optional[float]
    specificity: Optional[float]
    f1: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    overall: OverallMetrics
    per_class: dict = field(default_factory=dict)  # class id -> BinaryMetrics
    class_names: dict = field(default_factory=dict)

    @property
    def excluded(self) -> tuple:
        return self.overall.excluded

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "overall": self.overall.to_dict(),
            "per_class": {
                str(c): {"name": self.class_names.get(c), **m.to_dict()}
                for c, m in sorted(self.per_class.items())
            },
            "excluded": list(self.excluded),
        }


# ---------- Confusion ----------

def _labels(track) -> np.ndarray:
    if isinstance(track, LabelTrack):
        return track.as_array()
    return np.asarray(track, dtype=np.int64)


def confusion(
    truth,
    pred,
    stride: int = 1,
    num_classes: Optional[int] = None,
    max_frames: int = 0,
) -> ConfusionMatrix:
    """Count frames 0, stride, 2*stride, ... (at most ``max_frames`` of them if set)."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    t, p = _labels(truth), _labels(pred)
    if t.shape != p.shape:
        raise MetricsError(f"truth has {t.size} frames but prediction has {p.size}")
    t, p = t[::stride], p[::stride]
    if max_frames:
        t, p = t[:max_frames], p[:max_frames]

    if num_classes is None:
        num_classes = int(max(t.max(initial=-1), p.max(initial=-1))) + 1
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= num_classes):
        raise MetricsError(f"class id outside 0..{num_classes - 1}")

    labels = list(range(num_classes))
    if t.size == 0:
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    else:
        counts = confusion_matrix(t, p, labels=labels).astype(np.int64)
    return ConfusionMatrix(counts, tuple(labels))


def confusion_for_tracks(
    pairs: Sequence[tuple],
    stride: int = 1,
    max_frames: int = 0,
    num_classes: Optional[int] = None,
) -> ConfusionMatrix:
    """Sum of per-video matrices over ``(truth, pred)`` pairs."""
    if not pairs:
        raise MetricsError("no (truth, prediction) pairs to score")
    if num_classes is None:
        num_classes = 1 + max(
            int(max(_labels(t).max(initial=0), _labels(p).max(initial=0))) for t, p in pairs
        )
    total = None
    for truth, pred in pairs:
        cm = confusion(truth, pred, stride, num_classes, max_frames)
        total = cm if total is None else total + cm
    return total


# ---------- Metrics ----------

def _ratio(num: float, den: float) -> Optional[float]:
    return float(num / den) if den else None


def _f1(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _mean_defined(values) -> tuple[Optional[float], int]:
    defined = [v for v in values if v is not None]
    skipped = len(values) - len(defined)
    return (float(np.mean(defined)) if defined else None), skipped


def overall(cm: ConfusionMatrix) -> OverallMetrics:
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if c.size == 0 or total == 0:
        raise MetricsError("confusion matrix is empty")

    rows, cols, diag = c.sum(axis=1), c.sum(axis=0), np.diag(c)
    keep = (rows > 0) | (cols > 0)
    included = [i for i in range(len(cm.labels)) if keep[i]]
    excluded = tuple(cm.labels[i] for i in range(len(cm.labels)) if not keep[i])

    recalls = [_ratio(diag[i], rows[i]) for i in included]
    precisions = [_ratio(diag[i], cols[i]) for i in included]
    macro_recall, recall_skipped = _mean_defined(recalls)
    macro_precision, precision_skipped = _mean_defined(precisions)

    binary_acc = [(total - rows[i] - cols[i] + 2 * diag[i]) / total for i in included]
    cba = [diag[i] / max(rows[i], cols[i]) for i in included]

    return OverallMetrics(
        acc=float(diag.sum() / total),
        avacc=float(np.mean(binary_acc)),
        cba=float(np.mean(cba)),
        macro_precision=macro_precision,
        macro_recall=macro_recall,
        macro_f1=_f1(macro_precision, macro_recall),
        included=tuple(cm.labels[i] for i in included),
        excluded=excluded,
        precision_skipped=precision_skipped,
        recall_skipped=recall_skipped,
    )


def binary_per_class(cm: ConfusionMatrix) -> dict[int, BinaryMetrics]:
    """One-vs-rest metrics for every class of the matrix."""
    c = cm.counts.astype(np.int64)
    total = int(c.sum())
    result = {}
    for i, label in enumerate(cm.labels):
        tp = int(c[i, i])
        fn = int(c[i, :].sum()) - tp
        fp = int(c[:, i].sum()) - tp
        tn = total - tp - fn - fp
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        result[label] = BinaryMetrics(
            tp=tp,
            fn=fn,
            fp=fp,
            tn=tn,
            acc=float((tp + tn) / total) if total else 0.0,
            precision=precision,
            recall=recall,
            specificity=_ratio(tn, tn + fp),
            f1=_f1(precision, recall),
        )
    return result


def evaluate(cm: ConfusionMatrix, class_names: Optional[dict] = None) -> MetricsReport:
    summary = overall(cm)
    per_class = {c: m for c, m in binary_per_class(cm).items() if c in summary.included}
    if summary.excluded:
        logger.info(f"Excluded {len(summary.excluded)} classes that never occur: {list(summary.excluded)}")
    return MetricsReport(cm, summary, per_class, dict(class_names or {}))


# ---------- Report formatting ----------

def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def format_report(report: MetricsReport) -> str:
    """Aligned text tables: confusion matrix with Recall column and Precision row, then per-class metrics."""
    names = report.class_names
    included = list(report.overall.included)
    index = {label: i for i, label in enumerate(report.confusion.labels)}
    counts = report.confusion.counts
    label_of = {c: str(names.get(c, c)) for c in included}
    name_width = max([len("Precision")] + [len(n) for n in label_of.values()])
    cell = max(8, max((len(str(int(v))) for v in counts.flat), default=1) + 2)

    lines = ["Confusion matrix (rows: true class, columns: predicted class)"]
    header = " " * name_width + "".join(f"{i:>{cell}}" for i in range(len(included))) + f"{'Recall':>{cell + 2}}"
    lines.append(header)
    for k, c in enumerate(included):
        row = counts[index[c]]
        recall = report.per_class[c].recall
        lines.append(
            f"{label_of[c]:<{name_width}}"
            + "".join(f"{int(row[index[d]]):>{cell}}" for d in included)
            + f"{_fmt(recall):>{cell + 2}}"
        )
    lines.append(
        f"{'Precision':<{name_width}}"
        + "".join(f"{_fmt(report.per_class[c].precision):>{cell}}" for c in included)
    )
    lines.append("Columns: " + ", ".join(f"{i}={label_of[c]}" for i, c in enumerate(included)))

    o = report.overall
    lines += [
        "",
        f"ACC {_fmt(o.acc)}  AvACC {_fmt(o.avacc)}  CBA {_fmt(o.cba)}  "
        f"macro-Prec {_fmt(o.macro_precision)}  macro-Rec {_fmt(o.macro_recall)}  macro-F1 {_fmt(o.macro_f1)}",
    ]
    if o.precision_skipped or o.recall_skipped:
        lines.append(f"n/a skipped in macro means: precision {o.precision_skipped}, recall {o.recall_skipped}")
    if o.excluded:
        lines.append("Excluded classes: " + ", ".join(str(names.get(c, c)) for c in o.excluded))

    lines += ["", f"{'Class':<{name_width}}" + "".join(f"{h:>10}" for h in ("ACC", "Prec", "Rec", "Spec", "F1"))]
    for c in included:
        m = report.per_class[c]
        lines.append(
            f"{label_of[c]:<{name_width}}"
            + "".join(f"{_fmt(v):>10}" for v in (m.acc, m.precision, m.recall, m.specificity, m.f1))
        )
    return "\n".join(lines) + "\n"
