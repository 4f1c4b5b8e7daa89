"""Fine-tuning from accumulated expert feedback, and the slice-based
noisy-feedback simulation.

Geometry feedback becomes positive supervision inside the drawn regions;
outside them the model's own predictions stand in as soft targets, so a
coarse box cannot punish correct detections elsewhere. Full raster
feedback (as produced by the simulation) supervises every pixel.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from ..config import LESIONS, TrainingConfig
from ..data.rasterize import rasterize
from ..data.types import DatasetSplit, FundusImage, GradeLabel, Sample
from ..errors import ConfigError, StateError
from ..grading.attention import attentive_forward
from ..grading.losses import cls_loss
from ..metriclog import MetricLog
from ..pipeline import TrainedSystem, train_system
from ..seg.losses import wbce
from ..seg.models import image_to_tensor, images_to_batch
from ..trainutil import epoch_batches, seed_everything
from .morphology import perturb_mask
from .records import FeedbackRecord, FeedbackSchedule


def _feedback_epochs(config: TrainingConfig) -> int:
    return max(1, round(config.seg_epochs * config.feedback_epoch_fraction))


def _feedback_lr(config: TrainingConfig) -> float:
    return config.learning_rate * config.feedback_lr_factor


def _seg_targets_from_records(
    system: TrainedSystem, records: list[FeedbackRecord], images: dict[str, FundusImage]
) -> dict[str, list[tuple[FundusImage, np.ndarray]]]:
    """Per lesion: (image, target) pairs combining drawn regions with the
    model's own predictions outside them."""
    drawn: dict[tuple[str, str], dict] = {}
    for record in records:
        image = images[record.case_id]
        h, w = image.shape
        for geometry in record.geometries:
            mask = rasterize(geometry, h, w)
            key = (record.case_id, geometry.lesion)
            slot = drawn.setdefault(key, {"mask": np.zeros((h, w), np.uint8), "full": False})
            slot["mask"] |= mask
            if geometry.kind == "raster":
                slot["full"] = True

    per_lesion: dict[str, list[tuple[FundusImage, np.ndarray]]] = {l: [] for l in LESIONS}
    for (case_id, lesion), slot in drawn.items():
        image = images[case_id]
        if slot["full"]:
            target = slot["mask"].astype(np.float32)
        else:
            pred = system.lesions(image).probs[lesion]
            target = np.where(slot["mask"] == 1, 1.0, pred).astype(np.float32)
        per_lesion[lesion].append((image, target))
    return {l: pairs for l, pairs in per_lesion.items() if pairs}


def _finetune_segmenter(model, pairs, config: TrainingConfig, epochs: int, lr: float) -> None:
    images = images_to_batch([img for img, _ in pairs])
    targets = torch.from_numpy(np.stack([t for _, t in pairs])).unsqueeze(1)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng([config.seed, 0xFB])
    model.train()
    for _ in range(epochs):
        for idx in epoch_batches(len(pairs), config.seg_batch_size, rng):
            loss = wbce(model(images[idx]), targets[idx], config.beta)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()


def _finetune_grading(
    system: TrainedSystem,
    labeled: list[tuple[FundusImage, int]],
    config: TrainingConfig,
    epochs: int,
    lr: float,
) -> None:
    from ..explain.bundle import union_lesions
    from ..grading.losses import inverse_frequency_weights
    from ..grading.train import grading_item_loss

    model, attn = system.grading, system.attn
    params = list(model.parameters()) + (list(attn.parameters()) if attn is not None else [])
    optimizer = torch.optim.Adam(params, lr=lr)
    rng = np.random.default_rng([config.seed, 0xFC])
    class_weights = inverse_frequency_weights([g for _, g in labeled])

    cache = {}
    for image, _ in labeled:
        lesions = system.lesions(image)
        maps = {
            l: torch.from_numpy(lesions.probs[l]).reshape(1, 1, *lesions.probs[l].shape)
            for l in LESIONS
        }
        cache[image.id] = (maps, union_lesions(lesions, config.lesion_bin_threshold))

    model.train()
    if attn is not None:
        attn.train()
    for _ in range(epochs):
        for idx in epoch_batches(len(labeled), config.grading_batch_size, rng):
            losses = []
            for i in idx:
                image, grade = labeled[i]
                x = image_to_tensor(image)
                maps, union = cache[image.id]
                if attn is not None:
                    item, _ = grading_item_loss(
                        model, attn, x, maps, grade, union, config,
                        weight=float(class_weights[grade]),
                    )
                else:
                    item = class_weights[grade] * cls_loss(model(x).squeeze(0), grade)
                losses.append(item)
            loss = torch.stack(losses).mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()
    if attn is not None:
        attn.eval()


def apply_feedback(
    system: TrainedSystem,
    records: list[FeedbackRecord],
    images: dict[str, FundusImage],
    config: Optional[TrainingConfig] = None,
    log: Optional[MetricLog] = None,
) -> TrainedSystem:
    """Consume accepted feedback records, fine-tuning only the models the
    feedback actually concerns."""
    config = config or system.config
    for record in records:
        if record.status != "accepted":
            raise StateError(
                f"record {record.record_id or record.case_id} is {record.status}, not accepted"
            )
        if record.case_id not in images:
            raise ConfigError(f"no image supplied for case {record.case_id!r}")

    epochs = _feedback_epochs(config)
    lr = _feedback_lr(config)
    seed_everything(config.seed + 23)

    seg_targets = _seg_targets_from_records(system, records, images)
    for lesion, pairs in seg_targets.items():
        _finetune_segmenter(system.seg[lesion], pairs, config, epochs, lr)
        if log is not None:
            log.append(stage="feedback_seg", lesion=lesion, pairs=len(pairs), epochs=epochs)

    graded = [
        (images[r.case_id], r.corrected_grade)
        for r in records
        if r.corrected_grade is not None
    ]
    if graded:
        _finetune_grading(system, graded, config, epochs, lr)
        if log is not None:
            log.append(stage="feedback_grading", cases=len(graded), epochs=epochs)

    for record in records:
        record.advance("consumed")
    return system


def simulation_records(
    samples: list[Sample], noise_kernel: int, seed: int
) -> list[FeedbackRecord]:
    """Simulated expert feedback: perturbed full masks plus the true grade."""
    from ..data.types import AnnotationGeometry

    records = []
    for i, sample in enumerate(samples):
        geometries = []
        for lesion in LESIONS:
            noisy = perturb_mask(
                sample.masks.masks[lesion], noise_kernel, mode="random", seed=seed + i
            )
            geometries.append(
                AnnotationGeometry(kind="raster", coordinates=(), lesion=lesion, raster=noisy)
            )
        records.append(
            FeedbackRecord(
                case_id=sample.image.id,
                geometries=geometries,
                corrected_grade=sample.grade.grade,
                reviewer="simulated",
                status="accepted",
            )
        )
    return records


def run_simulation(
    dataset: DatasetSplit,
    schedule: FeedbackSchedule,
    noise_kernel: int,
    config: TrainingConfig,
    seg_models: Optional[dict] = None,
    log: Optional[MetricLog] = None,
) -> MetricLog:
    """Slice-based feedback study: train on the base half, then fine-tune
    with one additional (noisy) slice per round, scoring the fixed test set
    after every round. Row 0 is the untouched base model."""
    by_id = {s.image.id: s for s in dataset.train}
    missing = [i for i in schedule.base_ids if i not in by_id]
    if missing:
        raise ConfigError(f"schedule ids not in dataset: {missing[:5]}")
    for s in dataset.train:
        if s.masks is None or s.grade is None:
            raise ConfigError("simulation needs both masks and grades on every sample")

    results = log if log is not None else MetricLog()
    base_samples = [by_id[i] for i in schedule.base_ids]
    base_split = DatasetSplit(
        name=f"{dataset.name}-base", train=tuple(base_samples), test=dataset.test
    )
    system = train_system(base_split, config, seg_models=seg_models)
    test = list(dataset.test)
    metrics = system.evaluate(test)
    results.append(pct_feedback=0, **metrics)

    epochs = _feedback_epochs(config)
    lr = _feedback_lr(config)
    revealed: list[Sample] = []
    for round_no, slice_ids in enumerate(schedule.slices, start=1):
        slice_samples = [by_id[i] for i in slice_ids]
        revealed.extend(slice_samples)
        if config.feedback_restart:
            system = train_system(base_split, config, seg_models=seg_models)

        # fine-tune on the base data plus everything revealed so far;
        # revealed masks carry the simulated annotation noise
        seg_pairs: dict[str, list] = {l: [] for l in LESIONS}
        for s in base_samples:
            for lesion in LESIONS:
                seg_pairs[lesion].append((s.image, s.masks.masks[lesion].astype(np.float32)))
        for j, s in enumerate(revealed):
            for lesion in LESIONS:
                noisy = perturb_mask(
                    s.masks.masks[lesion], noise_kernel, mode="random",
                    seed=config.seed + 31 * round_no + j,
                )
                seg_pairs[lesion].append((s.image, noisy.astype(np.float32)))
        seed_everything(config.seed + 29 + round_no)
        for lesion in LESIONS:
            _finetune_segmenter(system.seg[lesion], seg_pairs[lesion], config, epochs, lr)

        labeled = [(s.image, s.grade.grade) for s in base_samples + revealed]
        _finetune_grading(system, labeled, config, epochs, lr)

        metrics = system.evaluate(test)
        results.append(pct_feedback=round_no * 10, **metrics)
    return results
