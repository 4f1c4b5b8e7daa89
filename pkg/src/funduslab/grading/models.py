"""Disease-grading classifiers.

Two interchangeable backbones: a five-block CNN whose first/last feature
maps feed the lesion attention gates, and a small patch transformer with a
multiple-instance pooled head whose per-layer attention matrices feed the
rollout-based saliency path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ..config import NUM_GRADES, TrainingConfig
from ..data.types import FundusImage
from ..errors import ShapeError


@dataclass(frozen=True)
class GradePrediction:
    """Softmax grade probabilities; argmax ties break toward the lower grade."""

    image_id: str
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if probs.shape != (NUM_GRADES,):
            raise ShapeError(f"expected {NUM_GRADES} probabilities, got {probs.shape}")
        if abs(probs.sum() - 1.0) > 1e-6:
            raise ShapeError(f"probabilities sum to {probs.sum()}, expected 1")
        object.__setattr__(self, "probs", probs)

    @property
    def grade(self) -> int:
        return int(np.argmax(self.probs))  # first max = lowest tied grade


def _block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1),
        nn.GroupNorm(min(4, out_ch), out_ch),
        nn.ReLU(inplace=True),
    )


class GradingCNN(nn.Module):
    """Five stacked conv blocks and a pooled linear head."""

    backbone_kind = "cnn"

    def __init__(self, widths: tuple[int, ...] = (16, 32, 64, 64, 128), num_classes: int = NUM_GRADES):
        super().__init__()
        if len(widths) != 5:
            raise ShapeError("grading backbone needs exactly five block widths")
        self.widths = tuple(widths)
        self.num_classes = num_classes
        blocks = []
        in_ch = 3
        for w in widths:
            blocks.append(_block(in_ch, w))
            in_ch = w
        self.blocks = nn.ModuleList(blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(widths[-1], num_classes)

    def forward_features(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (first-block features, last-block features, logits)."""
        f_first = self.blocks[0](x)
        out = f_first
        for block in self.blocks[1:]:
            out = block(out)
        f_last = out
        logits = self.head(self.pool(f_last).flatten(1))
        return f_first, f_last, logits

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_features(x)[2]

    def head_from_features(self, f_last: torch.Tensor) -> torch.Tensor:
        return self.head(self.pool(f_last).flatten(1))

    def resume_from_first(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Run blocks 2..5 on (adapted) first-level features.

        Returns (logits, last-block features); the latter feeds the
        activation-map path during attention training.
        """
        out = features
        for block in self.blocks[1:]:
            out = block(out)
        return self.head_from_features(out), out


class TransformerLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        normed = self.norm1(x)
        attended, weights = self.attn(
            normed, normed, normed, need_weights=True, average_attn_weights=True
        )
        x = x + attended
        x = x + self.mlp(self.norm2(x))
        return x, weights


class GradingTransformer(nn.Module):
    """Patch transformer with a class token and a mean-pooled instance head."""

    backbone_kind = "transformer"

    def __init__(self, image_size: int = 64, patch: int = 8, dim: int = 32,
                 layers: int = 2, heads: int = 2, num_classes: int = NUM_GRADES):
        super().__init__()
        if image_size % patch:
            raise ShapeError(f"patch {patch} must divide image size {image_size}")
        self.patch = patch
        self.grid = image_size // patch
        self.num_classes = num_classes
        n_tokens = self.grid * self.grid
        self.embed = nn.Conv2d(3, dim, kernel_size=patch, stride=patch)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos = nn.Parameter(torch.zeros(1, n_tokens + 1, dim) + 0.01)
        self.layers = nn.ModuleList(TransformerLayer(dim, heads) for _ in range(layers))
        self.cls_head = nn.Linear(dim, num_classes)
        self.instance_head = nn.Linear(dim, num_classes)

    def tokens(self, x: torch.Tensor) -> torch.Tensor:
        t = self.embed(x).flatten(2).transpose(1, 2)  # (B, T, D)
        cls = self.cls_token.expand(t.shape[0], -1, -1)
        return torch.cat([cls, t], dim=1) + self.pos

    def forward_with_attention(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        t = self.tokens(x)
        attentions = []
        for layer in self.layers:
            t, weights = layer(t)
            attentions.append(weights)
        logits = self.cls_head(t[:, 0]) + self.instance_head(t[:, 1:].mean(dim=1))
        return logits, attentions

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_with_attention(x)[0]


def build_grading_model(config: TrainingConfig) -> nn.Module:
    if config.backbone_kind == "transformer":
        return GradingTransformer(image_size=config.canonical_size)
    return GradingCNN(widths=config.grading_widths)


def grade_probs(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    return torch.softmax(model(x), dim=-1)


@torch.no_grad()
def predict_grade(model: nn.Module, image: FundusImage) -> GradePrediction:
    from ..seg.models import image_to_tensor

    was_training = model.training
    model.eval()
    probs = grade_probs(model, image_to_tensor(image)).squeeze(0).numpy()
    if was_training:
        model.train()
    probs = probs / probs.sum()
    return GradePrediction(image_id=image.id, probs=probs)
