"""Explanation bundles: grade probabilities, activation map, lesion maps,
their overlaps, and a single Jaccard explanation score — plus overlay PNG
rendering and serialization.

Bundles are deterministic for a fixed image and model snapshot, so repeat
requests can be cached and byte-compared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..config import LESIONS
from ..data.types import FundusImage
from ..errors import NumericalError, ShapeError
from ..grading.attention import LesionAttention, attentive_forward, lesion_maps_to_tensors
from ..grading.models import GradePrediction
from ..metrics import jaccard
from ..seg.types import LesionPredictionSet
from .cam import grad_cam, normalize_map, threshold_map, transformer_cam


@dataclass(frozen=True)
class ActivationMap:
    image_id: str
    class_id: int
    raw: np.ndarray
    normalized: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.raw, dtype=np.float32)
        normalized = np.asarray(self.normalized, dtype=np.float32)
        if raw.min() < 0:
            raise ShapeError("raw activation map must be nonnegative")
        if normalized.min() < 0 or normalized.max() > 1:
            raise ShapeError("normalized activation map must lie in [0, 1]")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "normalized", normalized)


@dataclass(frozen=True)
class ExplanationBundle:
    prediction: GradePrediction
    cam: ActivationMap
    lesions: LesionPredictionSet
    per_lesion_overlap: dict[str, float]
    union_overlap: float
    explanation_score: float

    def to_record(self, model_version: str = "") -> dict:
        return {
            "image_id": self.prediction.image_id,
            "grade": self.prediction.grade,
            # 9 decimals keeps the sum-to-one invariant intact at 1e-6
            "probs": [round(float(p), 9) for p in self.prediction.probs],
            "explanation_score": round(self.explanation_score, 6),
            "union_overlap": round(self.union_overlap, 6),
            "per_lesion_overlap": {
                l: round(v, 6) for l, v in sorted(self.per_lesion_overlap.items())
            },
            "class_id": self.cam.class_id,
            "model_version": model_version,
        }


def union_lesions(preds: LesionPredictionSet, bin_threshold: float = 0.5) -> np.ndarray:
    """Pixelwise OR of the per-lesion binarizations (strictly above threshold)."""
    shape = preds.shape
    out = np.zeros(shape, dtype=np.uint8)
    for lesion in LESIONS:
        out |= (preds.probs[lesion] > bin_threshold).astype(np.uint8)
    return out


def overlap_loss(tam, union, h: int, w: int):
    """Euclidean distance between the gated map and the union region,
    scaled by the pixel count: (1 / (h*w)) * ||tam - union||_2."""
    if isinstance(tam, torch.Tensor):
        union_t = torch.as_tensor(np.asarray(union), dtype=tam.dtype)
        if tam.shape != union_t.shape:
            raise ShapeError(f"map {tuple(tam.shape)} vs union {tuple(union_t.shape)}")
        return torch.linalg.vector_norm(tam - union_t) / (h * w)
    tam = np.asarray(tam, dtype=np.float64)
    union = np.asarray(union, dtype=np.float64)
    if tam.shape != union.shape:
        raise ShapeError(f"map {tam.shape} vs union {union.shape}")
    return float(np.linalg.norm((tam - union).ravel()) / (h * w))


def grading_total(l_cls_att, l_overlap):
    """Unit-weight sum of the attentive classification and overlap terms."""
    for part in (l_cls_att, l_overlap):
        value = float(part.detach()) if isinstance(part, torch.Tensor) else float(part)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite grading component: {value}")
    return l_cls_att + l_overlap


def explanation_score(cam_bin: np.ndarray, union: np.ndarray) -> float:
    """Jaccard overlap of the binarized activation map with the lesion union."""
    return jaccard(cam_bin, union)


def build_bundle(
    seg_models: dict,
    grading_model,
    image: FundusImage,
    attn: LesionAttention | None = None,
    sigma: float = 0.5,
    omega: float = 100.0,
    lesion_bin_threshold: float = 0.5,
    cam_bin_threshold: float = 0.5,
) -> ExplanationBundle:
    """Run the full explanation pipeline for one image."""
    from ..seg.models import image_to_tensor, predict_lesions

    try:
        lesions = predict_lesions(seg_models, image)
    except Exception as exc:
        raise type(exc)(f"[stage=segmentation] {exc}") from exc

    try:
        x = image_to_tensor(image)
        if attn is not None and getattr(grading_model, "backbone_kind", "cnn") == "cnn":
            maps = lesion_maps_to_tensors(lesions)
            was_training = grading_model.training
            grading_model.eval()
            attn.eval()
            with torch.no_grad():
                logits, _ = attentive_forward(grading_model, attn, x, maps)
            if was_training:
                grading_model.train()
                attn.train()
            probs = torch.softmax(logits.squeeze(0), dim=-1).numpy()
        else:
            was_training = grading_model.training
            grading_model.eval()
            with torch.no_grad():
                probs = torch.softmax(grading_model(x).squeeze(0), dim=-1).numpy()
            if was_training:
                grading_model.train()
        probs = probs.astype(np.float64)
        probs = probs / probs.sum()
        prediction = GradePrediction(image_id=image.id, probs=probs)
    except Exception as exc:
        raise type(exc)(f"[stage=grading] {exc}") from exc

    try:
        if getattr(grading_model, "backbone_kind", "cnn") == "transformer":
            raw = transformer_cam(grading_model, image, prediction.grade)
        else:
            raw = grad_cam(grading_model, image, prediction.grade)
        normalized = normalize_map(torch.from_numpy(raw)).numpy()
        gated = threshold_map(normalized, sigma=sigma, omega=omega)
        cam = ActivationMap(
            image_id=image.id,
            class_id=prediction.grade,
            raw=raw,
            normalized=np.clip(gated, 0.0, 1.0),
        )
    except Exception as exc:
        raise type(exc)(f"[stage=cam] {exc}") from exc

    union = union_lesions(lesions, lesion_bin_threshold)
    cam_bin = (cam.normalized > cam_bin_threshold).astype(np.uint8)
    per_lesion = {
        l: jaccard(cam_bin, (lesions.probs[l] > lesion_bin_threshold).astype(np.uint8))
        for l in LESIONS
    }
    score = explanation_score(cam_bin, union)
    return ExplanationBundle(
        prediction=prediction,
        cam=cam,
        lesions=lesions,
        per_lesion_overlap=per_lesion,
        union_overlap=jaccard(cam_bin, union),
        explanation_score=score,
    )


# ---------------------------------------------------------------- rendering

_CAM_COLOR = np.array([1.0, 0.15, 0.0], dtype=np.float32)
_LESION_COLORS = {
    "MA": np.array([0.9, 0.2, 0.9], dtype=np.float32),
    "HE": np.array([0.2, 0.4, 1.0], dtype=np.float32),
    "EX": np.array([0.1, 0.9, 0.9], dtype=np.float32),
    "SE": np.array([0.4, 1.0, 0.3], dtype=np.float32),
}
_UNION_COLOR = np.array([0.1, 1.0, 0.1], dtype=np.float32)


def _to_png(path: Path, array: np.ndarray) -> None:
    arr = np.clip(np.rint(array * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        Image.fromarray(arr, mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def _blend(base: np.ndarray, overlay_color: np.ndarray, weight: np.ndarray) -> np.ndarray:
    w = weight[..., None].astype(np.float32)
    return base * (1.0 - 0.6 * w) + overlay_color * 0.6 * w


def render_overlays(bundle: ExplanationBundle, image: FundusImage, out_dir: str | Path) -> dict[str, str]:
    """Write the bundle's PNG set; returns {overlay name: file name}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}

    cam = bundle.cam.normalized
    base = image.pixels.astype(np.float32)
    union = union_lesions(bundle.lesions).astype(np.float32)

    heat = np.zeros((*cam.shape, 3), dtype=np.float32)
    heat[..., 0] = cam
    heat[..., 2] = 1.0 - cam
    plan = {
        "image": base,
        "cam": heat,
        "cam_union": _blend(np.stack([union] * 3, axis=-1) * 0.6, _CAM_COLOR, cam),
        "cam_union_image": _blend(_blend(base, _UNION_COLOR, union), _CAM_COLOR, cam),
    }
    for lesion in LESIONS:
        mask = (bundle.lesions.probs[lesion] > 0.5).astype(np.float32)
        plan[f"cam_{lesion}"] = _blend(_blend(base, _LESION_COLORS[lesion], mask), _CAM_COLOR, cam)
        plan[f"mask_{lesion}"] = bundle.lesions.probs[lesion]
    for name, array in plan.items():
        filename = f"{name}.png"
        _to_png(out_dir / filename, array)
        files[name] = filename
    return files


def write_bundle(
    bundle: ExplanationBundle, image: FundusImage, out_dir: str | Path, model_version: str = ""
) -> Path:
    """Serialize metadata + overlays into a directory; returns the metadata path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = render_overlays(bundle, image, out_dir)
    record = bundle.to_record(model_version)
    record["overlays"] = files
    meta = out_dir / "bundle.json"
    meta.write_text(json.dumps(record, indent=2, sort_keys=True))
    return meta
