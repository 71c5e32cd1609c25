"""ROC-AUC (rank form), ROC curve points and multi-task aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from molfusion.errors import NoValidTask, SingleClass


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float


@dataclass
class MetricsReport:
    per_task_auc: list[tuple[str, float | None]]
    mean_auc: float
    n_valid_tasks: int

    def to_dict(self):
        return {
            "auc_per_task": {name: auc for name, auc in self.per_task_auc},
            "mean_auc": self.mean_auc,
            "n_valid_tasks": self.n_valid_tasks,
        }


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"need both classes, got {n_pos} positive / {n_neg} negative")
    return scores, pos, n_pos, n_neg


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks (a tied pair counts one half)."""
    scores, pos, n_pos, n_neg = _check(scores, labels)
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    n_pairs = float(n_pos) * n_neg
    # Always divide the smaller of U, n_pairs - U so that reversing the scores
    # gives exactly 1 - auc.
    if 2.0 * u <= n_pairs:
        return u / n_pairs
    return 1.0 - (n_pairs - u) / n_pairs


def roc_curve(scores, labels) -> list[RocPoint]:
    """ROC points from threshold +inf down through every distinct score."""
    scores, pos, n_pos, n_neg = _check(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = pos[order]
    tps = np.cumsum(p)
    fps = np.cumsum(~p)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    points = [RocPoint(math.inf, 0.0, 0.0)]
    for i in last:
        points.append(RocPoint(float(s[i]), fps[i] / n_neg, tps[i] / n_pos))
    return points


def trapezoid_area(points: list[RocPoint]) -> float:
    area = 0.0
    for a, b in zip(points, points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return area


def write_roc_csv(path, points: list[RocPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for pt in points:
            w.writerow([repr(float(pt.threshold)), repr(float(pt.fpr)), repr(float(pt.tpr))])


def multitask_auc(per_task, task_names=None) -> MetricsReport:
    """Per-task AUC over non-missing labels, averaged over tasks where it is defined.

    ``per_task`` is a sequence of ``(scores, labels)``; NaN labels are missing.
    """
    per_task = list(per_task)
    if not per_task:
        raise ValueError("need at least one task")
    if task_names is None:
        task_names = [f"task{i}" for i in range(len(per_task))]
    results = []
    for name, (scores, labels) in zip(task_names, per_task):
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        keep = ~np.isnan(labels)
        try:
            auc = roc_auc(scores[keep], labels[keep])
        except SingleClass:
            auc = None
        results.append((name, auc))
    defined = [a for _, a in results if a is not None]
    if not defined:
        raise NoValidTask("no task has both classes present")
    return MetricsReport(results, float(np.mean(defined)), len(defined))
