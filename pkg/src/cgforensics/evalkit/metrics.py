"""Confusion matrix and accuracy metrics."""

from dataclasses import dataclass

import numpy as np

from ..head import HeadModel, predict

N_CLASSES = 3


@dataclass
class EvalResult:
    matrix: np.ndarray          # 3x3, rows = truth, cols = prediction
    per_class: np.ndarray       # diag / rowsum, nan for absent classes
    total: float

    def report(self, names=("GAN", "Graphics", "Real")) -> str:
        lines = ["confusion matrix (rows = truth, cols = prediction)"]
        lines.append("%10s" % "" + "".join("%10s" % n for n in names))
        for i, n in enumerate(names):
            lines.append("%10s" % n + "".join("%10d" % v for v in self.matrix[i]))
        for i, n in enumerate(names):
            v = self.per_class[i]
            lines.append("accuracy %-9s %s" % (n, "n/a" if np.isnan(v) else "%.2f%%" % (100 * v)))
        lines.append("accuracy total     %.2f%%" % (100 * self.total))
        return "\n".join(lines)


def confusion_matrix(truth, pred) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("truth and prediction must be equal-length vectors")
    if len(truth) == 0:
        raise ValueError("empty prediction set")
    for v in (truth, pred):
        if v.min() < 0 or v.max() >= N_CLASSES:
            raise ValueError("labels must lie in {0,1,2}")
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, (truth, pred), 1)
    return m


def from_matrix(m) -> EvalResult:
    m = np.asarray(m, dtype=np.int64)
    row = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(row > 0, np.diag(m) / row, np.nan)
    total = float(np.trace(m) / m.sum())
    return EvalResult(m, per_class, total)


def evaluate(model: HeadModel, X, y) -> EvalResult:
    if len(np.atleast_2d(X)) == 0:
        raise ValueError("empty test set")
    _, pred = predict(model, np.asarray(X))
    return from_matrix(confusion_matrix(y, pred))
