"""End-to-end system assembly: four lesion segmenters, the grading
backbone, optional attention gates, and the explanation path, trained
together from a labeled split and usable as one object."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainingConfig
from .data.types import DatasetSplit, FundusImage, Sample
from .evaluate import eval_grading
from .explain.bundle import ExplanationBundle, build_bundle
from .grading.attention import LesionAttention, lesion_maps_to_tensors
from .grading.models import GradePrediction, build_grading_model, predict_grade
from .grading.train import train_grading
from .metriclog import MetricLog
from .seg.models import LesionSegmenter, predict_lesions
from .seg.types import LesionPredictionSet
from .uda.train import train_source_models


@dataclass
class TrainedSystem:
    seg: dict[str, LesionSegmenter]
    grading: object
    attn: Optional[LesionAttention]
    config: TrainingConfig
    log: MetricLog = field(default_factory=MetricLog)

    def lesions(self, image: FundusImage) -> LesionPredictionSet:
        return predict_lesions(self.seg, image)

    def grade(self, image: FundusImage, lesions: Optional[LesionPredictionSet] = None) -> GradePrediction:
        if self.attn is None:
            return predict_grade(self.grading, image)
        import torch

        from .grading.attention import attentive_forward
        from .seg.models import image_to_tensor

        if lesions is None:
            lesions = self.lesions(image)
        maps = lesion_maps_to_tensors(lesions)
        was_training = self.grading.training
        self.grading.eval()
        self.attn.eval()
        with torch.no_grad():
            logits, _ = attentive_forward(self.grading, self.attn, image_to_tensor(image), maps)
        if was_training:
            self.grading.train()
            self.attn.train()
        probs = torch.softmax(logits.squeeze(0), dim=-1).numpy().astype(np.float64)
        return GradePrediction(image_id=image.id, probs=probs / probs.sum())

    def bundle(self, image: FundusImage) -> ExplanationBundle:
        return build_bundle(
            self.seg,
            self.grading,
            image,
            attn=self.attn,
            sigma=self.config.sigma,
            omega=self.config.omega,
            lesion_bin_threshold=self.config.lesion_bin_threshold,
            cam_bin_threshold=self.config.cam_bin_threshold,
        )

    def evaluate(self, samples: list[Sample]) -> dict[str, float]:
        """Accuracy, kappa, and mean explanation score on graded samples.

        The explanation score averages over diseased cases only; for a
        grade-0 image the lesion union is empty and the overlap carries no
        signal (mirrors the grade-0 guard on the overlap loss).
        """
        metrics = eval_grading(lambda s: self.grade(s.image).grade, samples)
        diseased = [s for s in samples if s.grade is not None and s.grade.grade > 0]
        pool = diseased or samples
        scores = [self.bundle(s.image).explanation_score for s in pool]
        metrics["explanation"] = float(np.mean(scores)) if scores else 0.0
        return metrics

    def lesion_cache(self, samples: list[Sample]) -> dict[str, LesionPredictionSet]:
        return {s.image.id: self.lesions(s.image) for s in samples}


def save_system(system: TrainedSystem, path) -> None:
    """One archive per system version: every net's parameters + a header."""
    import io
    import json
    import zipfile
    from pathlib import Path

    import torch

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "config": system.config.to_dict(),
        "has_attention": system.attn is not None,
        "backbone_kind": getattr(system.grading, "backbone_kind", "cnn"),
        "canonical_size": system.config.canonical_size,
        "config_hash": system.config.config_hash(),
    }
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("header.json", json.dumps(header, sort_keys=True, indent=2))
        nets = {f"seg_{l}": m for l, m in system.seg.items()}
        nets["grading"] = system.grading
        if system.attn is not None:
            nets["attn"] = system.attn
        for name, net in nets.items():
            blob = io.BytesIO()
            torch.save(net.state_dict(), blob)
            zf.writestr(f"{name}.pt", blob.getvalue())


def load_system(path) -> TrainedSystem:
    import io
    import json
    import zipfile

    import torch

    from .config import LESIONS, config_from_dict
    from .grading.models import GradingCNN

    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        config = config_from_dict(header["config"])
        seg = {}
        for lesion in LESIONS:
            net = LesionSegmenter(config.seg_depth, config.seg_base_width, lesion=lesion)
            net.load_state_dict(
                torch.load(io.BytesIO(zf.read(f"seg_{lesion}.pt")), weights_only=True)
            )
            net.eval()
            seg[lesion] = net
        grading = build_grading_model(config)
        grading.load_state_dict(torch.load(io.BytesIO(zf.read("grading.pt")), weights_only=True))
        grading.eval()
        attn = None
        if header["has_attention"]:
            assert isinstance(grading, GradingCNN)
            attn = LesionAttention(grading.widths[0], grading.widths[-1])
            attn.load_state_dict(torch.load(io.BytesIO(zf.read("attn.pt")), weights_only=True))
            attn.eval()
    return TrainedSystem(seg=seg, grading=grading, attn=attn, config=config)


def train_system(
    data: DatasetSplit,
    config: TrainingConfig,
    use_attention: bool = True,
    use_overlap: bool = True,
    use_patch_adv: bool = True,
    seg_models: Optional[dict[str, LesionSegmenter]] = None,
    log: Optional[MetricLog] = None,
) -> TrainedSystem:
    """Train segmenters (unless provided) then the grading stack."""
    if log is None:
        log = MetricLog()
    if seg_models is None:
        seg_models = train_source_models(data, config, use_patch_adv=use_patch_adv, log=log)
    graded = [s for s in data.train if s.grade is not None]
    lesions_per_image = {s.image.id: predict_lesions(seg_models, s.image) for s in graded}
    grading = build_grading_model(config)
    attn = None
    grading, attn, log = train_grading(
        grading,
        attn,
        data,
        lesions_per_image,
        config,
        use_attention=use_attention and config.backbone_kind == "cnn",
        use_overlap=use_overlap,
        log=log,
    )
    return TrainedSystem(seg=seg_models, grading=grading, attn=attn, config=config, log=log)
