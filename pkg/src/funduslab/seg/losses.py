"""Supervised segmentation objective: class-balanced binary cross-entropy.

The balancing weight multiplies the positive (lesion) term only, so sparse
lesions are not drowned out by background pixels. Predictions are clamped
away from {0, 1} before the logs.
"""

from __future__ import annotations

import numpy as np
import torch

from ..config import LESIONS
from ..data.types import LesionMaskSet
from ..errors import DataIntegrityError, ShapeError
from .types import LesionPredictionSet

LOG_EPS = 1e-7


def _as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value), dtype=torch.float32)


def wbce(pred, target, beta: float = 10.0) -> torch.Tensor:
    """Mean over pixels of -(beta * y_true * log(y) + (1 - y_true) * log(1 - y))."""
    pred = _as_tensor(pred)
    target = _as_tensor(target).to(pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    clamped = pred.clamp(LOG_EPS, 1.0 - LOG_EPS)
    loss = -(beta * target * torch.log(clamped) + (1.0 - target) * torch.log(1.0 - clamped))
    return loss.mean()


def multi_lesion_seg_loss(
    preds: LesionPredictionSet, targets: LesionMaskSet, beta: float = 10.0
) -> torch.Tensor:
    """Mean over the four lesion classes of the per-lesion wbce."""
    if preds.image_id != targets.image_id:
        raise DataIntegrityError(
            f"prediction/mask id mismatch: {preds.image_id!r} vs {targets.image_id!r}"
        )
    losses = []
    for lesion in LESIONS:
        if lesion not in preds.probs or lesion not in targets.masks:
            raise DataIntegrityError(f"missing lesion key {lesion}")
        losses.append(wbce(preds.probs[lesion], targets.masks[lesion], beta))
    return torch.stack(losses).mean()
