"""Shared evaluation passes over dataset samples.

Pixel AUC metrics pool every pixel of the evaluated samples per lesion
class; grading metrics reduce to a confusion matrix first.
"""

from __future__ import annotations

import numpy as np
import torch

from .config import LESIONS
from .data.types import Sample
from .metrics import (
    ScoredPixels,
    accuracy,
    auc_pr,
    auc_roc,
    confusion_from_predictions,
    quadratic_kappa,
)


@torch.no_grad()
def seg_scores(model, samples: list[Sample], target_key: str) -> ScoredPixels:
    """Pool predicted probabilities and labels over all pixels.

    ``target_key`` is a lesion name or ``"union"`` for the lesion-agnostic
    pretext target.
    """
    from .seg.models import images_to_batch

    was_training = model.training
    model.eval()
    scores, labels = [], []
    for sample in samples:
        x = images_to_batch([sample.image])
        pred = model(x).squeeze().numpy()
        if target_key == "union":
            truth = sample.masks.union()
        else:
            truth = sample.masks.masks[target_key]
        scores.append(pred.ravel())
        labels.append(truth.ravel())
    if was_training:
        model.train()
    return ScoredPixels(np.concatenate(scores), np.concatenate(labels))


def safe_auc(sp: ScoredPixels) -> tuple[float, float]:
    """(auc_roc, auc_pr), degenerate label sets scored as chance level."""
    pos = int(sp.labels.sum())
    if pos == 0 or pos == sp.labels.size:
        prevalence = pos / sp.labels.size
        return 0.5, prevalence
    return auc_roc(sp), auc_pr(sp)


def eval_seg_models(
    models: dict, samples: list[Sample], pooled: bool = True
) -> dict[str, dict[str, float]]:
    """Per-lesion AUC-ROC / AUC-PR for a model family.

    Pooled mode scores all pixels of the split together; per-image mode
    averages image-level AUCs, skipping images without both classes.
    """
    out = {}
    for lesion in LESIONS:
        if pooled:
            sp = seg_scores(models[lesion], samples, lesion)
            roc, pr = safe_auc(sp)
        else:
            rocs, prs = [], []
            for sample in samples:
                sp = seg_scores(models[lesion], [sample], lesion)
                if 0 < int(sp.labels.sum()) < sp.labels.size:
                    r, p = safe_auc(sp)
                    rocs.append(r)
                    prs.append(p)
            roc = float(np.mean(rocs)) if rocs else 0.5
            pr = float(np.mean(prs)) if prs else 0.0
        out[lesion] = {"auc_roc": roc, "auc_pr": pr}
    return out


def mean_auc_pr(per_lesion: dict[str, dict[str, float]]) -> float:
    return float(np.mean([per_lesion[l]["auc_pr"] for l in LESIONS]))


@torch.no_grad()
def eval_grading(predict_fn, samples: list[Sample]) -> dict[str, float]:
    """Accuracy and quadratic kappa of a grade-prediction callable."""
    true = [s.grade.grade for s in samples]
    pred = [int(predict_fn(s)) for s in samples]
    cm = confusion_from_predictions(true, pred)
    try:
        kappa = quadratic_kappa(cm)
    except Exception:
        kappa = 0.0
    return {"accuracy": accuracy(cm), "kappa": kappa}
