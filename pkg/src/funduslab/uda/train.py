"""Source-domain adversarial pretraining and the source-to-target
adaptation loop.

Adaptation variants build on each other: ``none`` evaluates the source
models as-is, ``entropy`` adds direct prediction-entropy minimization on
target images, ``adnet`` adds the adversarial game over self-information
maps, and ``full`` adds the feature-space critic. Per batch the order is
segmenter step, discriminator step(s), critic step.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from ..config import LESIONS, TrainingConfig
from ..data.types import DatasetSplit, Sample
from ..errors import ConfigError
from ..evaluate import eval_seg_models, mean_auc_pr
from ..metriclog import MetricLog
from ..seg.losses import wbce
from ..seg.models import LesionSegmenter, clone_segmenter, images_to_batch
from ..seg.train import finetune_lesion, pretrain_agnostic, train_segmenter
from ..trainutil import epoch_batches, make_optimizer, seed_everything
from .losses import (
    UdaWeights,
    batch_to_patches,
    binary_prob_pair,
    domain_adv_loss,
    entropy_loss,
    entropy_map,
    gradient_penalty,
    self_information_map,
    wasserstein_loss,
    _clog,
)
from .networks import DomainCritic, EntropyDiscriminator, PatchDiscriminator, flatten_features

VARIANTS = ("none", "entropy", "adnet", "full")


class PatchAdversary:
    """Plug-in for the segmenter trainer: conditional patch-adversarial
    pressure on source-domain predictions."""

    def __init__(self, image_size: int, config: TrainingConfig):
        grid = config.patch_grid
        if image_size % grid:
            raise ConfigError(f"patch_grid {grid} must divide image size {image_size}")
        self.grid = grid
        self.pd = PatchDiscriminator(image_size // grid, patch_grid=grid)
        self.optimizer = torch.optim.Adam(self.pd.parameters(), lr=config.critic_learning_rate)

    def _patches(self, images: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        return batch_to_patches(torch.cat([images, masks], dim=1), self.grid)

    def generator_term(self, images, pred, gt) -> torch.Tensor:
        return -_clog(self.pd(self._patches(images, pred))).mean()

    def update(self, images, pred, gt) -> float:
        d_real = self.pd(self._patches(images, gt))
        d_fake = self.pd(self._patches(images, pred))
        d_loss = -(_clog(d_real) + _clog(1.0 - d_fake)).mean()
        self.optimizer.zero_grad()
        d_loss.backward()
        self.optimizer.step()
        return float(d_loss.detach())


def train_source_models(
    data: DatasetSplit,
    config: TrainingConfig,
    use_pretext: bool = True,
    use_patch_adv: bool = True,
    log: Optional[MetricLog] = None,
) -> dict[str, LesionSegmenter]:
    """Source-domain pipeline: optional pretext pass, then one fine-tuned
    segmenter per lesion, optionally with the patch adversary."""
    size = config.canonical_size
    seed_everything(config.seed)
    init = LesionSegmenter(depth=config.seg_depth, base_width=config.seg_base_width)
    if use_pretext:
        adversary = PatchAdversary(size, config) if use_patch_adv else None
        pretrain_agnostic(init, data, config, log=log, adversary=adversary)
    models = {}
    for lesion in LESIONS:
        adversary = PatchAdversary(size, config) if use_patch_adv else None
        models[lesion] = finetune_lesion(init, lesion, data, config, log=log, adversary=adversary)
    return models


def _revealed_target_labels(
    target: DatasetSplit, fraction: float, seed: int
) -> list[Sample]:
    if fraction <= 0:
        return []
    labeled = [s for s in target.train if s.masks is not None]
    wanted = int(round(fraction * len(target.train)))
    if fraction > 1.0 or wanted > len(labeled):
        raise ConfigError(
            f"target label fraction {fraction} exceeds available labels "
            f"({len(labeled)}/{len(target.train)})"
        )
    rng = np.random.default_rng([seed, 0x7A9])
    idx = rng.permutation(len(labeled))[:wanted]
    return [labeled[i] for i in idx]


def train_uda(
    models: dict[str, LesionSegmenter],
    discriminators: Optional[dict] = None,
    source: DatasetSplit = None,
    target: DatasetSplit = None,
    config: TrainingConfig = None,
    variant: str = "full",
    target_label_fraction: float = 0.0,
    log: Optional[MetricLog] = None,
) -> tuple[dict[str, LesionSegmenter], MetricLog]:
    """Adapt source-trained segmenters to the target domain."""
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if log is None:
        log = MetricLog()
    weights = UdaWeights.from_config(config)
    seed_everything(config.seed + 17)

    revealed = _revealed_target_labels(target, target_label_fraction, config.seed)
    source_samples = [s for s in source.train if s.masks is not None]
    if not source_samples:
        raise ConfigError("source split carries no pixel labels")

    # the no-adaptation baseline runs the same loop for the same epochs
    # with every adaptation term switched off, so comparisons are paired

    src_images = images_to_batch([s.image for s in source_samples])
    src_masks = {
        l: torch.from_numpy(np.stack([s.masks.masks[l] for s in source_samples]))
        .unsqueeze(1)
        .float()
        for l in LESIONS
    }
    tgt_images = images_to_batch([s.image for s in target.train])
    rev_images = images_to_batch([s.image for s in revealed]) if revealed else None
    rev_masks = (
        {
            l: torch.from_numpy(np.stack([s.masks.masks[l] for s in revealed]))
            .unsqueeze(1)
            .float()
            for l in LESIONS
        }
        if revealed
        else None
    )

    if discriminators is None:
        discriminators = build_discriminators(models, config, variant)
    ad_nets = discriminators.get("ad", {})
    critics = discriminators.get("critic", {})
    ad_opts = {
        l: torch.optim.Adam(net.parameters(), lr=config.critic_learning_rate)
        for l, net in ad_nets.items()
    }
    critic_opts = {
        l: torch.optim.Adam(net.parameters(), lr=config.critic_learning_rate)
        for l, net in critics.items()
    }
    seg_opts = {l: make_optimizer(models[l].parameters(), config) for l in LESIONS}

    rng = np.random.default_rng([config.seed, 0xADA])
    batch = config.seg_batch_size
    n_src, n_tgt = len(source_samples), len(target.train)

    # the critic trains from the start, but its signal reaches the
    # segmenter on a ramp over the second half of training, once the
    # critic estimates are trustworthy
    ramp_start = config.adapt_epochs // 2
    for epoch in range(config.adapt_epochs):
        denom = max(1, config.adapt_epochs - ramp_start)
        w_ramp = max(0.0, (epoch - ramp_start + 1) / denom)
        for src_idx in epoch_batches(n_src, batch, rng):
            tgt_idx = rng.choice(n_tgt, size=min(batch, n_tgt), replace=False)
            x_s = src_images[src_idx]
            x_t = tgt_images[tgt_idx]
            for lesion in LESIONS:
                model = models[lesion]
                model.train()
                pred_s = model(x_s)
                loss = wbce(pred_s, src_masks[lesion][src_idx], config.beta)
                if rev_images is not None:
                    loss = loss + wbce(model(rev_images), rev_masks[lesion], config.beta)

                if variant != "none":
                    pred_t = model(x_t).squeeze(1)
                    pair_t = binary_prob_pair(pred_t)
                    emap = entropy_map(pair_t)
                    loss = loss + weights.lambda_ent * entropy_loss(emap) / len(tgt_idx)

                if variant in ("adnet", "full"):
                    i_t = self_information_map(pair_t).permute(0, 3, 1, 2)
                    g_loss = -_clog(ad_nets[lesion](i_t)).mean()
                    loss = loss + weights.lambda_adv * g_loss
                if variant == "full" and w_ramp > 0.0:
                    h_s = flatten_features(model.encode(x_s)[0])
                    h_t = flatten_features(model.encode(x_t)[0])
                    loss = loss + w_ramp * weights.lambda_w * wasserstein_loss(
                        critics[lesion], h_s, h_t
                    )
                seg_opts[lesion].zero_grad()
                loss.backward()
                seg_opts[lesion].step()

                if variant in ("adnet", "full"):
                    with torch.no_grad():
                        pair_s = binary_prob_pair(model(x_s).squeeze(1))
                        pair_t = binary_prob_pair(model(x_t).squeeze(1))
                        i_s = self_information_map(pair_s).permute(0, 3, 1, 2)
                        i_t = self_information_map(pair_t).permute(0, 3, 1, 2)
                    d_loss, _ = domain_adv_loss(ad_nets[lesion], i_s, i_t)
                    ad_opts[lesion].zero_grad()
                    d_loss.backward()
                    ad_opts[lesion].step()

                if variant == "full":
                    for _ in range(config.n_critic):
                        with torch.no_grad():
                            h_s = flatten_features(model.encode(x_s)[0])
                            h_t = flatten_features(model.encode(x_t)[0])
                        critic_loss = -wasserstein_loss(critics[lesion], h_s, h_t)
                        critic_loss = critic_loss + weights.eta * gradient_penalty(
                            critics[lesion], h_s, h_t, seed=config.seed + epoch
                        )
                        critic_opts[lesion].zero_grad()
                        critic_loss.backward()
                        critic_opts[lesion].step()
        _log_target_metrics(models, target, log, epoch=epoch, variant=variant,
                            pooled=config.pooled_pixel_auc)
    return models, log


def build_discriminators(models: dict[str, LesionSegmenter], config: TrainingConfig, variant: str) -> dict:
    """Fresh per-lesion adversaries sized to the segmenter's encoder."""
    size = config.canonical_size
    out: dict = {"ad": {}, "critic": {}}
    if variant in ("adnet", "full"):
        out["ad"] = {l: EntropyDiscriminator(in_channels=2) for l in LESIONS}
    if variant == "full":
        feat_dim = models["MA"].feature_width()
        out["critic"] = {
            l: DomainCritic(feat_dim, widths=config.critic_widths) for l in LESIONS
        }
    return out


def _log_target_metrics(models, target: DatasetSplit, log: MetricLog, epoch: int,
                        variant: str = "", pooled: bool = True) -> None:
    per_lesion = eval_seg_models(models, list(target.test), pooled=pooled)
    for lesion in LESIONS:
        log.append(
            epoch=epoch,
            variant=variant,
            lesion=lesion,
            auc_roc=per_lesion[lesion]["auc_roc"],
            auc_pr=per_lesion[lesion]["auc_pr"],
        )
    log.append(epoch=epoch, variant=variant, lesion="mean", auc_pr=mean_auc_pr(per_lesion))


def clone_models(models: dict[str, LesionSegmenter]) -> dict[str, LesionSegmenter]:
    return {l: clone_segmenter(m) for l, m in models.items()}


def run_uda_ablation(
    source: DatasetSplit,
    target: DatasetSplit,
    config: TrainingConfig,
    variants: tuple[str, ...] = VARIANTS,
    target_label_fraction: float = 0.0,
) -> dict[str, dict]:
    """Train every adaptation variant from one shared source-pretrained
    starting point; report per-lesion and mean target AUC."""
    base = train_source_models(source, config)
    results = {}
    for variant in variants:
        models = clone_models(base)
        log = MetricLog()
        train_uda(
            models,
            None,
            source,
            target,
            config,
            variant=variant,
            target_label_fraction=target_label_fraction,
            log=log,
        )
        per_lesion = eval_seg_models(models, list(target.test))
        results[variant] = {
            "per_lesion": per_lesion,
            "mean_auc_pr": mean_auc_pr(per_lesion),
            "log": log,
        }
    return results
