from .losses import multi_lesion_seg_loss, wbce
from .models import (
    LesionSegmenter,
    clone_segmenter,
    image_to_tensor,
    images_to_batch,
    load_checkpoint_header,
    load_checkpoint_into,
    predict_lesions,
    save_checkpoint,
    state_bytes,
)
from .train import finetune_lesion, pretrain_agnostic
from .types import LesionPredictionSet

__all__ = [
    "LesionSegmenter",
    "LesionPredictionSet",
    "wbce",
    "multi_lesion_seg_loss",
    "predict_lesions",
    "pretrain_agnostic",
    "finetune_lesion",
    "clone_segmenter",
    "image_to_tensor",
    "images_to_batch",
    "save_checkpoint",
    "load_checkpoint_header",
    "load_checkpoint_into",
    "state_bytes",
]
