"""Encoder-decoder lesion segmenter.

A compact U-shaped network: the encoder halves resolution per block, the
decoder mirrors it with skip connections, and a 1x1 head squashes to a
single probability channel. GroupNorm keeps tiny-batch training stable
and avoids leaking batch statistics between domains during adaptation.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import LESIONS
from ..data.types import FundusImage
from ..errors import ConfigError
from .types import LesionPredictionSet


def _conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    groups = min(4, out_ch)
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1),
        nn.GroupNorm(groups, out_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.GroupNorm(groups, out_ch),
        nn.ReLU(inplace=True),
    )


class LesionSegmenter(nn.Module):
    """U-shaped binary segmenter; ``lesion`` is None for the pretext model."""

    def __init__(self, depth: int = 3, base_width: int = 16, lesion: Optional[str] = None):
        super().__init__()
        if lesion is not None and lesion not in LESIONS:
            raise ConfigError(f"unknown lesion {lesion!r}")
        self.depth = depth
        self.base_width = base_width
        self.lesion = lesion

        widths = [base_width * 2**i for i in range(depth + 1)]
        self.enc_blocks = nn.ModuleList()
        in_ch = 3
        for w in widths[:-1]:
            self.enc_blocks.append(_conv_block(in_ch, w))
            in_ch = w
        self.bottleneck = _conv_block(widths[-2], widths[-1])

        self.up_convs = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for i in reversed(range(depth)):
            self.up_convs.append(nn.ConvTranspose2d(widths[i + 1], widths[i], 2, stride=2))
            self.dec_blocks.append(_conv_block(widths[i] * 2, widths[i]))
        self.head = nn.Conv2d(widths[0], 1, 1)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Return the bottleneck feature map and the skip activations."""
        skips = []
        for block in self.enc_blocks:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        return self.bottleneck(x), skips

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feat, skips = self.encode(x)
        for up, dec, skip in zip(self.up_convs, self.dec_blocks, reversed(skips)):
            feat = up(feat)
            feat = dec(torch.cat([feat, skip], dim=1))
        return torch.sigmoid(self.head(feat))

    def encoder_params(self) -> Iterator[nn.Parameter]:
        for module in (*self.enc_blocks, self.bottleneck):
            yield from module.parameters()

    def decoder_params(self) -> Iterator[nn.Parameter]:
        for module in (*self.up_convs, *self.dec_blocks, self.head):
            yield from module.parameters()

    def feature_width(self) -> int:
        return self.base_width * 2**self.depth


def image_to_tensor(image: FundusImage) -> torch.Tensor:
    return torch.from_numpy(image.pixels).permute(2, 0, 1).unsqueeze(0)


def images_to_batch(images: list[FundusImage]) -> torch.Tensor:
    return torch.cat([image_to_tensor(im) for im in images], dim=0)


@torch.no_grad()
def predict_lesions(
    models: dict[str, LesionSegmenter], image: FundusImage
) -> LesionPredictionSet:
    """Run all four lesion segmenters on one image."""
    missing = [l for l in LESIONS if l not in models]
    if missing:
        raise ConfigError(f"missing segmenter model(s) for {missing}")
    x = image_to_tensor(image)
    probs = {}
    for lesion in LESIONS:
        model = models[lesion]
        was_training = model.training
        model.eval()
        probs[lesion] = model(x).squeeze(0).squeeze(0).numpy()
        if was_training:
            model.train()
    return LesionPredictionSet(image_id=image.id, probs=probs)


def save_checkpoint(model: nn.Module, path: str | Path, header: dict) -> Path:
    """Write a checkpoint archive: parameter blob + JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = io.BytesIO()
    torch.save(model.state_dict(), blob)
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("header.json", json.dumps(header, sort_keys=True, indent=2))
        zf.writestr("params.pt", blob.getvalue())
    return path


def load_checkpoint_header(path: str | Path) -> dict:
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("header.json"))


def load_checkpoint_into(model: nn.Module, path: str | Path) -> dict:
    """Load parameters into an already-constructed model; returns the header."""
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        state = torch.load(io.BytesIO(zf.read("params.pt")), weights_only=True)
    model.load_state_dict(state)
    return header


def clone_segmenter(model: LesionSegmenter, lesion: Optional[str] = None) -> LesionSegmenter:
    copy = LesionSegmenter(model.depth, model.base_width, lesion=lesion or model.lesion)
    copy.load_state_dict({k: v.clone() for k, v in model.state_dict().items()})
    return copy


def state_bytes(model: nn.Module) -> bytes:
    """Canonical byte serialization of parameters, for change detection."""
    blob = io.BytesIO()
    for key in sorted(model.state_dict()):
        blob.write(model.state_dict()[key].numpy().tobytes())
    return blob.getvalue()
