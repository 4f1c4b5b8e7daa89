"""Lesion attention gates over classifier features.

Per lesion: a 1x1 mixing of the lesion probability map with the first-block
features, a gate built from the correlation of that attentive feature with
the (channel-mixed, upsampled) last-block features, and an elementwise
product back onto the first-block features. The four gated feature groups
are concatenated and adapted back to the backbone's channel width.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import LESIONS
from ..errors import ShapeError
from ..seg.types import LesionPredictionSet


class LesionAttention(nn.Module):
    """Learnable per-lesion attention parameters plus the shared mixers."""

    def __init__(self, first_channels: int, last_channels: int):
        super().__init__()
        self.first_channels = first_channels
        self.mix_last = nn.Conv2d(last_channels, first_channels, 1)
        self.w_first = nn.ModuleDict(
            {l: nn.Conv2d(1 + first_channels, first_channels, 1) for l in LESIONS}
        )
        self.w_last = nn.ModuleDict({l: nn.Conv2d(first_channels, 1, 1) for l in LESIONS})
        self.adapter = nn.Conv2d(len(LESIONS) * first_channels, first_channels, 1)
        self._init_as_identity()

    def _init_as_identity(self) -> None:
        """Start with every gate at exactly 0.5 and the adapter summing the
        groups back to the ungated features, so switching the attention
        path on does not perturb an already-trained backbone."""
        for lesion in LESIONS:
            nn.init.zeros_(self.w_last[lesion].weight)
            nn.init.zeros_(self.w_last[lesion].bias)
            nn.init.zeros_(self.w_first[lesion].bias)
        nn.init.zeros_(self.mix_last.bias)
        nn.init.zeros_(self.adapter.weight)
        nn.init.zeros_(self.adapter.bias)
        c = self.first_channels
        with torch.no_grad():
            for group in range(len(LESIONS)):
                for ch in range(c):
                    # four groups, each gated to 0.5 f_first: 4 * 0.5 * 0.5 = 1
                    self.adapter.weight[ch, group * c + ch, 0, 0] = 0.5

    def gate(
        self,
        f_first: torch.Tensor,
        f_last: torch.Tensor,
        lesion_maps: dict[str, torch.Tensor],
        order: tuple[str, ...] = LESIONS,
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        """Fuse lesion-gated first-block features.

        ``lesion_maps`` holds (B, 1, H, W) probability maps; they are
        resampled to the first-block resolution. Returns the channel-concat
        of the gated groups (in ``order``) and the per-lesion gates.
        """
        if f_first.shape[1] != self.first_channels:
            raise ShapeError(
                f"first-block features have {f_first.shape[1]} channels, "
                f"attention expects {self.first_channels}"
            )
        spatial = f_first.shape[-2:]
        mixed_last = F.interpolate(
            self.mix_last(f_last), size=spatial, mode="bilinear", align_corners=False
        )
        alphas: dict[str, torch.Tensor] = {}
        groups = []
        for lesion in order:
            z = lesion_maps[lesion]
            if z.shape[-2:] != spatial:
                z = F.interpolate(z, size=spatial, mode="bilinear", align_corners=False)
            attentive = F.relu(self.w_first[lesion](torch.cat([z, f_first], dim=1)))
            alpha = torch.sigmoid(self.w_last[lesion](attentive * mixed_last))
            alphas[lesion] = alpha
            groups.append(alpha * f_first)
        return torch.cat(groups, dim=1), alphas


def lesion_maps_to_tensors(lesions: LesionPredictionSet) -> dict[str, torch.Tensor]:
    """Prediction maps as (1, 1, H, W) tensors, detached from any graph."""
    return {
        l: torch.from_numpy(lesions.probs[l]).unsqueeze(0).unsqueeze(0).float()
        for l in LESIONS
    }


def attentive_features(
    f_first: torch.Tensor,
    f_last: torch.Tensor,
    lesions: LesionPredictionSet,
    params: LesionAttention,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Single-sample contract wrapper around the batched gate."""
    if f_first.dim() == 3:
        f_first = f_first.unsqueeze(0)
    if f_last.dim() == 3:
        f_last = f_last.unsqueeze(0)
    fused, alphas = params.gate(f_first, f_last, lesion_maps_to_tensors(lesions))
    return fused.squeeze(0), {l: a.squeeze(0) for l, a in alphas.items()}


def attentive_forward(
    model,
    attn: LesionAttention,
    x: torch.Tensor,
    lesion_maps: dict[str, torch.Tensor],
) -> tuple[torch.Tensor, torch.Tensor]:
    """Full attentive pass: gate first-block features, resume the backbone.

    Returns (logits, resumed last-block features).
    """
    f_first, f_last, _ = model.forward_features(x)
    fused, _ = attn.gate(f_first, f_last, lesion_maps)
    return model.resume_from_first(attn.adapter(fused))


def attentive_logits(
    model,
    attn: LesionAttention,
    x: torch.Tensor,
    lesion_maps: dict[str, torch.Tensor],
) -> torch.Tensor:
    return attentive_forward(model, attn, x, lesion_maps)[0]
