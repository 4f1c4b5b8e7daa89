"""Classification objectives for the grading network."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..config import LESIONS, NUM_GRADES
from ..data.types import GradeLabel
from ..errors import DataIntegrityError, LabelError
from .attention import LesionAttention, attentive_logits


def cls_loss(logits: torch.Tensor, label: GradeLabel | int) -> torch.Tensor:
    """Multi-class cross entropy: -log softmax(logits)[grade]."""
    grade = label.grade if isinstance(label, GradeLabel) else int(label)
    if not 0 <= grade < NUM_GRADES:
        raise LabelError(f"grade {grade} outside [0, {NUM_GRADES - 1}]")
    logits = logits.reshape(-1)
    return -F.log_softmax(logits, dim=-1)[grade]


def batch_cls_loss(
    logits: torch.Tensor, grades: torch.Tensor, class_weights: torch.Tensor | None = None
) -> torch.Tensor:
    return F.cross_entropy(logits, grades, weight=class_weights)


def attention_cls_loss(
    model,
    attn: LesionAttention,
    batch: list[tuple],
) -> torch.Tensor:
    """Mean cross entropy of the attentive forward over a batch.

    Batch items are (image tensor CHW, lesion map dict, GradeLabel). Lesion
    maps are frozen segmenter outputs; gradients reach only the grading and
    attention parameters.
    """
    losses = []
    for image, lesion_maps, label in batch:
        if lesion_maps is None:
            raise DataIntegrityError("attention loss requires lesion predictions per image")
        x = image.unsqueeze(0) if image.dim() == 3 else image
        maps = {
            l: (m.detach() if isinstance(m, torch.Tensor) else torch.as_tensor(np.asarray(m), dtype=torch.float32).reshape(1, 1, *np.asarray(m).shape))
            for l, m in lesion_maps.items()
        }
        if set(maps) != set(LESIONS):
            raise DataIntegrityError(f"lesion maps must cover {LESIONS}")
        logits = attentive_logits(model, attn, x, maps)
        losses.append(cls_loss(logits, label))
    return torch.stack(losses).mean()


def inverse_frequency_weights(grades: list[int]) -> torch.Tensor:
    """Class weights proportional to inverse frequency, normalized to mean 1."""
    counts = np.bincount(grades, minlength=NUM_GRADES).astype(np.float64)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    present = inv > 0
    inv[present] = inv[present] / inv[present].mean()
    return torch.as_tensor(inv, dtype=torch.float32)
