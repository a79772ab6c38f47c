from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, StateError

__all__ = [
    "ConfusionMatrix", "accumulate", "accuracy", "kappa", "f_measure", "macro_f_measure",
    "EvaluationReport", "AggregateReport", "evaluate", "aggregate",
]


class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    def __init__(self, num_classes: int, counts=None):
        if num_classes < 1:
            raise ArgumentError(f"num_classes must be >= 1, got {num_classes}")
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64) if counts is None \
            else np.array(counts, dtype=np.int64)
        if self.counts.shape != (num_classes, num_classes) or (self.counts < 0).any():
            raise ArgumentError(f"counts must be a nonnegative {num_classes}x{num_classes} matrix")

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int) -> "ConfusionMatrix":
        y_true, y_pred = np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)
        if y_true.shape != y_pred.shape:
            raise ArgumentError(f"y_true {y_true.shape} and y_pred {y_pred.shape} differ")
        for arr in (y_true, y_pred):
            if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
                raise ArgumentError(f"class index outside [0, {num_classes})")
        cm = cls(num_classes)
        np.add.at(cm.counts, (y_true, y_pred), 1)
        return cm

    @property
    def num_classes(self) -> int: return self.counts.shape[0]

    @property
    def total(self) -> int: return int(self.counts.sum())

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self.counts.tolist()})"


def accumulate(cm: ConfusionMatrix, true_class: int, predicted_class: int) -> ConfusionMatrix:
    C = cm.num_classes
    if not (0 <= true_class < C and 0 <= predicted_class < C):
        raise ArgumentError(f"({true_class}, {predicted_class}) outside a {C}-class matrix")
    cm.counts[true_class, predicted_class] += 1
    return cm


def _nonempty(cm: ConfusionMatrix) -> np.ndarray:
    if cm.total == 0:
        raise StateError("metric requested on an empty confusion matrix")
    return cm.counts.astype(np.float64)


def accuracy(cm: ConfusionMatrix) -> float:
    m = _nonempty(cm)
    return float(np.trace(m) / m.sum())


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa; 0 when expected agreement is 1 (single occupied cell)."""
    m = _nonempty(cm)
    n = m.sum()
    p_o = np.trace(m) / n
    p_e = float(np.dot(m.sum(axis=1), m.sum(axis=0)) / (n * n))
    if np.isclose(p_e, 1.0, rtol=0.0, atol=1e-15):
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def _per_class_f(m: np.ndarray) -> np.ndarray:
    tp = np.diag(m)
    predicted, support = m.sum(axis=0), m.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def f_measure(cm: ConfusionMatrix) -> tuple[float, np.ndarray]:
    """Support-weighted mean of per-class F1, and the per-class values."""
    m = _nonempty(cm)
    per_class = _per_class_f(m)
    return float(np.dot(m.sum(axis=1), per_class) / m.sum()), per_class


def macro_f_measure(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 over classes with nonzero support."""
    m = _nonempty(cm)
    per_class = _per_class_f(m)
    present = m.sum(axis=1) > 0
    return float(per_class[present].mean())


# ------------------------------- REPORTS -------------------------------

@dataclass
class EvaluationReport:
    accuracy: float
    f_measure: float
    kappa: float
    per_class_f: np.ndarray
    macro_f: float = float("nan")
    confusion: ConfusionMatrix | None = None
    label: str = ""

    @property
    def num_classes(self) -> int: return len(self.per_class_f)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "f_measure": self.f_measure, "kappa": self.kappa,
            "macro_f": self.macro_f, "per_class_f": [float(v) for v in self.per_class_f],
        }


def evaluate(cm: ConfusionMatrix, label: str = "") -> EvaluationReport:
    weighted, per_class = f_measure(cm)
    return EvaluationReport(accuracy(cm), weighted, kappa(cm), per_class, macro_f_measure(cm), cm, label)


@dataclass
class AggregateReport:
    """Mean and population standard deviation of each metric over splits."""
    mean: EvaluationReport
    std: EvaluationReport
    splits: list[EvaluationReport] = field(default_factory=list)

    @property
    def num_splits(self) -> int: return len(self.splits)


_SCALARS = ("accuracy", "f_measure", "kappa", "macro_f")


def aggregate(reports: list[EvaluationReport]) -> AggregateReport:
    if not reports:
        raise ArgumentError("aggregate needs at least one report")
    C = reports[0].num_classes
    if any(r.num_classes != C for r in reports):
        raise ArgumentError(f"reports mix class counts: {sorted({r.num_classes for r in reports})}")

    def stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return values.mean(axis=0), values.std(axis=0, ddof=0)

    mean, std = {}, {}
    for key in _SCALARS:
        mu, sd = stats(np.array([getattr(r, key) for r in reports], dtype=float))
        mean[key], std[key] = float(mu), float(sd)
    pc_mu, pc_sd = stats(np.stack([r.per_class_f for r in reports]))
    label = reports[0].label
    return AggregateReport(EvaluationReport(per_class_f=pc_mu, label=label, **mean),
                           EvaluationReport(per_class_f=pc_sd, label=label, **std),
                           list(reports))
