from .bundle import (
    ActivationMap,
    ExplanationBundle,
    build_bundle,
    explanation_score,
    grading_total,
    overlap_loss,
    render_overlays,
    union_lesions,
    write_bundle,
)
from .cam import (
    attention_rollout,
    differentiable_cam,
    grad_cam,
    normalize_map,
    rollout_to_map,
    threshold_map,
    transformer_cam,
)

__all__ = [
    "ActivationMap",
    "ExplanationBundle",
    "grad_cam",
    "differentiable_cam",
    "threshold_map",
    "normalize_map",
    "attention_rollout",
    "rollout_to_map",
    "transformer_cam",
    "union_lesions",
    "overlap_loss",
    "grading_total",
    "explanation_score",
    "build_bundle",
    "render_overlays",
    "write_bundle",
]
