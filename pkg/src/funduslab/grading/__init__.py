from .attention import (
    LesionAttention,
    attentive_features,
    attentive_forward,
    attentive_logits,
    lesion_maps_to_tensors,
)
from .losses import attention_cls_loss, batch_cls_loss, cls_loss, inverse_frequency_weights
from .models import (
    GradePrediction,
    GradingCNN,
    GradingTransformer,
    build_grading_model,
    predict_grade,
)
from .train import predict_attentive, train_grading

__all__ = [
    "GradePrediction",
    "GradingCNN",
    "GradingTransformer",
    "build_grading_model",
    "predict_grade",
    "LesionAttention",
    "attentive_features",
    "attentive_forward",
    "attentive_logits",
    "lesion_maps_to_tensors",
    "cls_loss",
    "batch_cls_loss",
    "attention_cls_loss",
    "inverse_frequency_weights",
    "train_grading",
    "predict_attentive",
]
