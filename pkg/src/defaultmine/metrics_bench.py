"""Confusion-matrix metrics, per-batch reports, and the scaling benchmark."""

from __future__ import annotations

import csv
import statistics
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BenchWarning, MetricError

REPORT_HEADER = ("batch", "accuracy", "precision", "recall", "f_score",
                 "offline_seconds", "online_seconds")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_from_pairs(predictions, labels) -> ConfusionMatrix:
    """Count a confusion matrix from aligned 0/1 predictions and labels."""
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    if preds.shape != truth.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truth.shape}")
    tp = int(np.sum((preds == 1) & (truth == 1)))
    fp = int(np.sum((preds == 1) & (truth == 0)))
    tn = int(np.sum((preds == 0) & (truth == 0)))
    fn = int(np.sum((preds == 0) & (truth == 1)))
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class MetricSet:
    """Accuracy, precision, recall and F1; ``undefined`` names the metrics
    whose denominator was zero (reported as 0)."""

    accuracy: float
    precision: float
    recall: float
    f_score: float
    undefined: frozenset = frozenset()


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Standard binary metrics; zero denominators yield 0 and are flagged."""
    if cm.total == 0:
        raise MetricError("cannot compute metrics over zero items")
    undefined = set()

    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        undefined.add("precision")
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        undefined.add("recall")
    if precision + recall > 0:
        f_score = 2.0 * precision * recall / (precision + recall)
    else:
        f_score = 0.0
        undefined.add("f_score")
    return MetricSet(accuracy=accuracy, precision=precision, recall=recall,
                     f_score=f_score, undefined=frozenset(undefined))


@dataclass(frozen=True)
class BatchReport:
    """One row of the per-batch report: metrics plus the two phase timings."""

    batch: int
    accuracy: float
    precision: float
    recall: float
    f_score: float
    offline_seconds: float
    online_seconds: float
    skipped: int = 0

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall", "f_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {v}")
        if self.offline_seconds < 0 or self.online_seconds < 0:
            raise ValueError("timings must be non-negative")


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in reports:
            writer.writerow([
                r.batch,
                f"{r.accuracy:.6f}", f"{r.precision:.6f}",
                f"{r.recall:.6f}", f"{r.f_score:.6f}",
                f"{r.offline_seconds:.6f}", f"{r.online_seconds:.6f}",
            ])


@dataclass(frozen=True)
class BenchPoint:
    size: int
    seconds: tuple[float, ...]

    @property
    def median_seconds(self) -> float:
        return statistics.median(self.seconds)


@dataclass(frozen=True)
class BenchResult:
    points: tuple[BenchPoint, ...]
    slope: float
    intercept: float
    r_squared: float


def bench_scaling(batch, halvings: int, scorer, repeats: int = 3) -> BenchResult:
    """Time ``scorer`` on prefixes of ``batch`` halving in size, and fit a line.

    Produces ``halvings + 1`` points at sizes n, n/2, ..., n/2**halvings and a
    least-squares fit ``time = slope * size + intercept`` with its R².
    Warns when the smallest timing sits too close to the clock resolution.
    """
    if halvings < 2:
        raise ValueError("halvings must be at least 2")
    n = len(batch)
    sizes = [n >> h for h in range(halvings + 1)]
    if sizes[-1] < 1:
        raise ValueError(f"batch of {n} cannot be halved {halvings} times")

    points = []
    for size in sizes:
        prefix = batch[:size]
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            scorer(prefix)
            times.append(time.perf_counter() - t0)
        points.append(BenchPoint(size=size, seconds=tuple(times)))

    resolution = time.get_clock_info("perf_counter").resolution
    fastest = min(min(p.seconds) for p in points)
    if fastest < 100.0 * resolution:
        warnings.warn(
            f"smallest timing {fastest:.3e}s is within 100x the timer resolution "
            f"{resolution:.3e}s; measurements may be unreliable",
            BenchWarning,
            stacklevel=2,
        )

    xs = np.array([p.size for p in points], dtype=np.float64)
    ys = np.array([p.median_seconds for p in points], dtype=np.float64)
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else (
        0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    )
    return BenchResult(points=tuple(points), slope=float(slope),
                       intercept=float(intercept), r_squared=r_squared)


def write_bench_csv(result: BenchResult, path) -> None:
    """Write (size, seconds, repetition) rows with the fit as trailing comments."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("size", "seconds", "repetition"))
        for point in result.points:
            for rep, seconds in enumerate(point.seconds, start=1):
                writer.writerow([point.size, f"{seconds:.6f}", rep])
        fh.write(f"# fit: slope={result.slope!r} intercept={result.intercept!r} "
                 f"r_squared={result.r_squared!r}\n")
