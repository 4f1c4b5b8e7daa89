"""Segmenter training: lesion-agnostic pretext pass, then per-lesion
fine-tuning with the pretext weights as initialization.

The pretext target is the union of the four ground-truth masks. An
optional ``adversary`` hook lets the adaptation layer add conditional
patch-adversarial pressure without this module knowing the details.
"""

from __future__ import annotations

import zlib
from typing import Optional, Protocol

import numpy as np
import torch

from ..config import TrainingConfig
from ..data.types import DatasetSplit, Sample
from ..errors import ConfigError, MissingLabelError
from ..evaluate import safe_auc, seg_scores
from ..metriclog import MetricLog
from ..metrics import ScoredPixels
from ..trainutil import epoch_batches, make_optimizer, make_scheduler, seed_everything, validation_split
from .losses import wbce
from .models import LesionSegmenter, clone_segmenter, images_to_batch


class Adversary(Protocol):
    """Per-batch hook contributed by the adaptation layer."""

    def generator_term(self, images: torch.Tensor, pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor: ...

    def update(self, images: torch.Tensor, pred: torch.Tensor, gt: torch.Tensor) -> float: ...


def _labeled_samples(data: DatasetSplit) -> list[Sample]:
    samples = [s for s in data.train if s.masks is not None]
    if not samples:
        raise MissingLabelError(f"dataset {data.name!r} has no pixel-level labels")
    return samples


def _mask_tensor(samples: list[Sample], key: str) -> torch.Tensor:
    if key == "union":
        arrays = [s.masks.union() for s in samples]
    else:
        arrays = [s.masks.masks[key] for s in samples]
    return torch.from_numpy(np.stack(arrays)).unsqueeze(1).float()


def train_segmenter(
    model: LesionSegmenter,
    samples: list[Sample],
    target_key: str,
    config: TrainingConfig,
    epochs: int,
    log: Optional[MetricLog] = None,
    val_samples: Optional[list[Sample]] = None,
    adversary: Optional[Adversary] = None,
    lr: Optional[float] = None,
    freeze_encoder: bool = False,
) -> LesionSegmenter:
    """Shared training loop for pretext and per-lesion passes."""
    if not samples:
        raise MissingLabelError("no training samples with masks")
    images = images_to_batch([s.image for s in samples])
    targets = _mask_tensor(samples, target_key)

    params = model.decoder_params() if freeze_encoder else model.parameters()
    optimizer = make_optimizer(params, config, lr=lr)
    steps = max(1, len(samples) // config.seg_batch_size)
    scheduler = make_scheduler(optimizer, config, steps)
    rng = np.random.default_rng([config.seed, zlib.crc32(target_key.encode())])

    for epoch in range(epochs):
        model.train()
        epoch_loss = 0.0
        n_batches = 0
        for idx in epoch_batches(len(samples), config.seg_batch_size, rng):
            x = images[idx]
            y = targets[idx]
            pred = model(x)
            loss = wbce(pred, y, config.beta)
            if adversary is not None:
                loss = loss + config.lambda_p * adversary.generator_term(x, pred, y)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if scheduler is not None:
                scheduler.step()
            if adversary is not None:
                adversary.update(x, pred.detach(), y)
            epoch_loss += float(loss.detach())
            n_batches += 1
        row = {"epoch": epoch, "lesion": target_key, "train_loss": epoch_loss / n_batches}
        if val_samples:
            sp = seg_scores(model, val_samples, target_key)
            roc, pr = safe_auc(sp)
            row.update(val_auc_roc=roc, val_auc_pr=pr, val_loss=_val_loss(model, val_samples, target_key, config))
        if log is not None:
            log.append(**row)
    return model


@torch.no_grad()
def _val_loss(model: LesionSegmenter, samples: list[Sample], target_key: str, config: TrainingConfig) -> float:
    was_training = model.training
    model.eval()
    x = images_to_batch([s.image for s in samples])
    y = _mask_tensor(samples, target_key)
    loss = float(wbce(model(x), y, config.beta))
    if was_training:
        model.train()
    return loss


def pretrain_agnostic(
    model: LesionSegmenter,
    data: DatasetSplit,
    config: TrainingConfig,
    log: Optional[MetricLog] = None,
    adversary: Optional[Adversary] = None,
) -> LesionSegmenter:
    """Pretext pass: predict the lesion-agnostic union region."""
    samples = _labeled_samples(data)
    seed_everything(config.seed)
    return train_segmenter(
        model, samples, "union", config, config.pretext_epochs, log=log, adversary=adversary
    )


def finetune_lesion(
    init: LesionSegmenter,
    lesion: str,
    data: DatasetSplit,
    config: TrainingConfig,
    log: Optional[MetricLog] = None,
    adversary: Optional[Adversary] = None,
    freeze_encoder: bool = False,
) -> LesionSegmenter:
    """Per-lesion fine-tune starting from the pretext-trained weights."""
    from ..config import LESIONS

    if lesion not in LESIONS:
        raise ConfigError(f"unknown lesion {lesion!r}")
    samples = _labeled_samples(data)
    train_idx, val_idx = validation_split(
        len(samples), config.validation_fraction, config.seed
    )
    model = clone_segmenter(init, lesion=lesion)
    seed_everything(config.seed + 1)
    return train_segmenter(
        model,
        [samples[i] for i in train_idx],
        lesion,
        config,
        config.seg_epochs,
        log=log,
        val_samples=[samples[i] for i in val_idx],
        adversary=adversary,
        freeze_encoder=freeze_encoder,
    )


def baseline_auc_pr(samples: list[Sample], lesion: str) -> float:
    """AUC-PR of the constant 0.5 predictor, the no-skill reference."""
    labels = np.concatenate([s.masks.masks[lesion].ravel() for s in samples])
    scores = np.full_like(labels, 0.5, dtype=np.float64)
    _, pr = safe_auc(ScoredPixels(scores, labels))
    return pr
