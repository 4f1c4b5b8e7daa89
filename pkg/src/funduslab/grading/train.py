"""Two-phase grading training.

Phase 1 trains the backbone alone on image-level labels with
class-weighted cross entropy. Phase 2 fine-tunes the backbone jointly
with the lesion attention gates, optionally adding the activation-map
overlap constraint for every sample whose grade is nonzero.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from ..config import LESIONS, TrainingConfig
from ..data.types import DatasetSplit, Sample
from ..errors import DataIntegrityError
from ..evaluate import eval_grading
from ..metriclog import MetricLog
from ..seg.models import images_to_batch
from ..seg.types import LesionPredictionSet
from ..trainutil import epoch_batches, make_optimizer, seed_everything, validation_split
from .attention import LesionAttention, attentive_forward
from .losses import batch_cls_loss, cls_loss, inverse_frequency_weights
from .models import GradingCNN, predict_grade


def _graded_samples(data: DatasetSplit) -> list[Sample]:
    samples = [s for s in data.train if s.grade is not None]
    if not samples:
        raise DataIntegrityError(f"dataset {data.name!r} has no grade labels")
    return samples


def _lesion_tensor_cache(
    samples: list[Sample], lesions_per_image: dict[str, LesionPredictionSet]
) -> dict[str, dict[str, torch.Tensor]]:
    cache = {}
    for sample in samples:
        preds = lesions_per_image.get(sample.image.id)
        if preds is None:
            raise DataIntegrityError(f"no lesion predictions for image {sample.image.id!r}")
        cache[sample.image.id] = {
            l: torch.from_numpy(preds.probs[l]).reshape(1, 1, *preds.probs[l].shape)
            for l in LESIONS
        }
    return cache


def grading_item_loss(
    model,
    attn: LesionAttention,
    x: torch.Tensor,
    lesion_maps: dict[str, torch.Tensor],
    grade: int,
    union: np.ndarray,
    config: TrainingConfig,
    use_overlap: bool = True,
    weight: float = 1.0,
) -> tuple[torch.Tensor, bool]:
    """One sample's attentive objective.

    The activation-map overlap term applies only to diseased samples
    (grade nonzero); healthy images have no lesion region to anchor to.
    Returns (loss, whether the overlap term was used).
    """
    from ..explain.bundle import overlap_loss
    from ..explain.cam import differentiable_cam, threshold_map

    logits, f_resumed = attentive_forward(model, attn, x, lesion_maps)
    loss = weight * cls_loss(logits.squeeze(0), grade)
    if use_overlap and grade != 0:
        size = (config.canonical_size, config.canonical_size)
        am = differentiable_cam(logits[0, grade], f_resumed, size)
        tam = threshold_map(am, config.sigma, config.omega)
        return loss + overlap_loss(tam, union, *size), True
    return loss, False


def train_grading(
    model,
    attn: Optional[LesionAttention],
    data: DatasetSplit,
    lesions_per_image: Optional[dict[str, LesionPredictionSet]],
    config: TrainingConfig,
    use_attention: bool = True,
    use_overlap: bool = True,
    log: Optional[MetricLog] = None,
    class_weighted: bool = True,
):
    """Train the grading model; returns (model, attn, log)."""
    # imported here: explain depends on grading's model types
    from ..explain.bundle import union_lesions

    if log is None:
        log = MetricLog()
    samples = _graded_samples(data)
    train_idx, val_idx = validation_split(len(samples), config.validation_fraction, config.seed)
    train_samples = [samples[i] for i in train_idx]
    val_samples = [samples[i] for i in val_idx]

    seed_everything(config.seed + 3)
    images = images_to_batch([s.image for s in train_samples])
    grades = torch.tensor([s.grade.grade for s in train_samples], dtype=torch.long)
    weights = (
        inverse_frequency_weights([int(g) for g in grades]) if class_weighted else None
    )
    optimizer = make_optimizer(model.parameters(), config)
    rng = np.random.default_rng([config.seed, 0x6AD])

    # best-validation snapshot selection across both phases
    best = {"key": (-2.0, -1.0), "model": None, "attn": None}

    def consider(metrics: dict, attn_module) -> None:
        key = (metrics["kappa"], metrics["accuracy"])
        if key >= best["key"]:
            best["key"] = key
            best["model"] = {k: v.clone() for k, v in model.state_dict().items()}
            best["attn"] = (
                {k: v.clone() for k, v in attn_module.state_dict().items()}
                if attn_module is not None
                else None
            )

    for epoch in range(config.grading_epochs):
        model.train()
        total, batches = 0.0, 0
        for idx in epoch_batches(len(train_samples), config.grading_batch_size, rng):
            logits = model(images[idx])
            loss = batch_cls_loss(logits, grades[idx], weights)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        metrics = eval_grading(lambda s: predict_grade(model, s.image).grade, val_samples)
        consider(metrics, None)
        log.append(epoch=epoch, phase="cls", loss=total / batches, **metrics)

    if not use_attention:
        if best["model"] is not None:
            model.load_state_dict(best["model"])
        return model, attn, log

    if attn is None:
        if not isinstance(model, GradingCNN):
            raise DataIntegrityError("lesion attention gates require the CNN backbone")
        attn = LesionAttention(model.widths[0], model.widths[-1])
    if lesions_per_image is None:
        raise DataIntegrityError("attention phase requires precomputed lesion predictions")
    cache = _lesion_tensor_cache(train_samples + val_samples, lesions_per_image)
    unions = {
        s.image.id: union_lesions(lesions_per_image[s.image.id], config.lesion_bin_threshold)
        for s in train_samples
    }

    consider(
        eval_grading(lambda s: predict_attentive(model, attn, s, cache).grade, val_samples),
        attn,
    )
    # gates learn at full rate, the already-trained backbone drifts slowly
    optimizer = torch.optim.Adam(
        [
            {"params": model.parameters(), "lr": config.learning_rate * 0.25},
            {"params": attn.parameters(), "lr": config.learning_rate},
        ]
    )

    for epoch in range(config.attention_epochs):
        model.train()
        attn.train()
        total, batches = 0.0, 0
        for idx in epoch_batches(len(train_samples), config.grading_batch_size, rng):
            losses = []
            for i in idx:
                sample = train_samples[i]
                w = float(weights[sample.grade.grade]) if weights is not None else 1.0
                item_loss, _ = grading_item_loss(
                    model,
                    attn,
                    images[i : i + 1],
                    cache[sample.image.id],
                    sample.grade.grade,
                    unions[sample.image.id],
                    config,
                    use_overlap=use_overlap,
                    weight=w,
                )
                losses.append(item_loss)
            loss = torch.stack(losses).mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        metrics = eval_grading(
            lambda s: predict_attentive(model, attn, s, cache).grade, val_samples
        )
        consider(metrics, attn)
        log.append(epoch=epoch, phase="attention", loss=total / batches, **metrics)

    if best["model"] is not None:
        model.load_state_dict(best["model"])
        if best["attn"] is not None:
            attn.load_state_dict(best["attn"])
        else:
            attn._init_as_identity()  # best snapshot predates the gates
    return model, attn, log


@torch.no_grad()
def predict_attentive(model, attn: LesionAttention, sample: Sample, cache: dict):
    """Grade prediction through the attentive pipeline."""
    from ..grading.models import GradePrediction
    from ..seg.models import image_to_tensor

    was_training = model.training
    model.eval()
    attn.eval()
    maps = cache[sample.image.id]
    logits, _ = attentive_forward(model, attn, image_to_tensor(sample.image), maps)
    if was_training:
        model.train()
        attn.train()
    probs = torch.softmax(logits.squeeze(0), dim=-1).numpy().astype(np.float64)
    return GradePrediction(image_id=sample.image.id, probs=probs / probs.sum())
