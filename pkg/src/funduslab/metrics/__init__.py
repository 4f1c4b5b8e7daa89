"""Evaluation metrics: AUC-ROC, AUC-PR, accuracy, quadratic weighted kappa.

AUC-ROC uses the rank-statistic (Mann-Whitney) formulation, exact under
ties. AUC-PR integrates the precision-recall step curve without linear
interpolation between points. Pixel-level AUC pools all test pixels per
lesion class unless configured otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import NUM_GRADES
from ..errors import DegenerateLabelsError, ShapeError

__all__ = [
    "ScoredPixels",
    "ConfusionMatrix",
    "auc_roc",
    "auc_pr",
    "accuracy",
    "quadratic_kappa",
    "jaccard",
    "confusion_from_predictions",
]


@dataclass(frozen=True)
class ScoredPixels:
    """Flat scores in [0, 1] paired with binary labels of equal length."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel()
        if scores.shape != labels.shape:
            raise ShapeError(f"scores {scores.shape} vs labels {labels.shape}")
        if not np.isin(labels, (0, 1)).all():
            raise DegenerateLabelsError("labels must be binary")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Grade confusion counts; rows are true grades, columns predictions."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (NUM_GRADES, NUM_GRADES):
            raise ShapeError(f"expected {NUM_GRADES}x{NUM_GRADES} counts, got {counts.shape}")
        if (counts < 0).any():
            raise DegenerateLabelsError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_from_predictions(true_grades, predicted_grades) -> ConfusionMatrix:
    counts = np.zeros((NUM_GRADES, NUM_GRADES), dtype=np.int64)
    for t, p in zip(true_grades, predicted_grades, strict=True):
        counts[int(t), int(p)] += 1
    return ConfusionMatrix(counts)


def auc_roc(sp: ScoredPixels) -> float:
    """Area under the ROC curve via the rank statistic, ties averaged."""
    labels = sp.labels
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("auc_roc needs at least one positive and one negative")
    order = np.argsort(sp.scores, kind="mergesort")
    sorted_scores = sp.scores[order]
    # midranks: equal scores share the average of their 1-based positions
    ranks = np.empty(labels.size, dtype=np.float64)
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(sp: ScoredPixels) -> float:
    """Area under the precision-recall step curve (right-step, no interpolation)."""
    n_pos = int(sp.labels.sum())
    if n_pos == 0:
        raise DegenerateLabelsError("auc_pr needs at least one positive")
    order = np.argsort(-sp.scores, kind="mergesort")
    labels = sp.labels[order]
    scores = sp.scores[order]
    tp = np.cumsum(labels)
    n_seen = np.arange(1, labels.size + 1)
    # evaluate only at the last index of each tied score block
    block_end = np.ones(labels.size, dtype=bool)
    block_end[:-1] = scores[:-1] != scores[1:]
    precision = tp[block_end] / n_seen[block_end]
    recall = tp[block_end] / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DegenerateLabelsError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def quadratic_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected ordinal agreement with (i-j)^2 disagreement weights."""
    total = cm.total
    if total == 0:
        raise DegenerateLabelsError("empty confusion matrix")
    c = NUM_GRADES
    i_idx, j_idx = np.meshgrid(np.arange(c), np.arange(c), indexing="ij")
    weights = (i_idx - j_idx) ** 2 / (c - 1) ** 2
    observed = cm.counts / total
    marg_true = observed.sum(axis=1)
    marg_pred = observed.sum(axis=0)
    expected = np.outer(marg_true, marg_pred)
    expected_disagreement = float((weights * expected).sum())
    if expected_disagreement == 0.0:
        raise DegenerateLabelsError("kappa undefined: chance agreement is exact")
    observed_disagreement = float((weights * observed).sum())
    return 1.0 - observed_disagreement / expected_disagreement


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
