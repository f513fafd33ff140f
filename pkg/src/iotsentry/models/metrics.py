"""Confusion counts, derived scores and per-prediction timing."""

from __future__ import annotations

import threading
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import ModelError
from .dataset import LabeledDataset


@dataclass
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    mean_inference_ms: Optional[float]
    p95_inference_ms: Optional[float]

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with ANOMALOUS (1) as the positive class."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    tp = int(((t == 1) & (p == 1)).sum())
    fp = int(((t == 0) & (p == 1)).sum())
    tn = int(((t == 0) & (p == 0)).sum())
    fn = int(((t == 1) & (p == 0)).sum())
    return tp, fp, tn, fn


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int,
                        timings_ms=None) -> EvalMetrics:
    n = tp + fp + tn + fn
    if n == 0:
        raise ModelError("EMPTY_DATASET", "no predictions to score")
    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    mean_ms = p95_ms = None
    if timings_ms is not None and len(timings_ms):
        arr = np.asarray(timings_ms, dtype=float)
        mean_ms = float(arr.mean())
        p95_ms = float(np.percentile(arr, 95))
    return EvalMetrics(accuracy, precision, recall, f1, tp, fp, tn, fn, mean_ms, p95_ms)


class _TimingBuffer(threading.local):
    def __init__(self):
        self.samples = []


_timing = _TimingBuffer()


def timed_predictions(model, X) -> tuple[np.ndarray, list]:
    """Predict row by row, timing each call on this thread's buffer."""
    buf = _timing.samples
    buf.clear()
    preds = np.empty(len(X), dtype=np.int64)
    clock = time.perf_counter_ns
    for i, fv in enumerate(X):
        t0 = clock()
        preds[i] = model.predict_code(fv)
        buf.append((clock() - t0) / 1e6)
    samples = list(buf)
    buf.clear()
    return preds, samples


def evaluate(model, test_set: LabeledDataset) -> EvalMetrics:
    if len(test_set) == 0:
        raise ModelError("EMPTY_DATASET", "evaluation set is empty")
    preds, timings = timed_predictions(model, test_set.X)
    return metrics_from_counts(*confusion(test_set.y, preds), timings_ms=timings)
