"""Resampling to the canonical working resolution.

Images are resized bilinearly; masks use nearest-neighbor so they stay
binary. uint8 inputs are rescaled to [0, 1], float inputs are clipped.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ChannelError
from .types import FundusImage


def _to_unit_float(raw: np.ndarray) -> np.ndarray:
    if raw.dtype == np.uint8:
        return raw.astype(np.float32) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float32) / 65535.0
    return np.clip(raw.astype(np.float32), 0.0, 1.0)


def resize_image(pixels: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an HxWx3 float array to size x size."""
    if pixels.shape[:2] == (size, size):
        return pixels.astype(np.float32)
    t = torch.from_numpy(np.ascontiguousarray(pixels.astype(np.float32)))
    t = t.permute(2, 0, 1).unsqueeze(0)
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out.squeeze(0).permute(1, 2, 0).clamp_(0.0, 1.0).numpy()


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor resize keeping the mask strictly binary."""
    if mask.shape == (size, size):
        return mask.astype(np.uint8)
    t = torch.from_numpy(np.ascontiguousarray(mask.astype(np.float32)))
    t = t.unsqueeze(0).unsqueeze(0)
    out = F.interpolate(t, size=(size, size), mode="nearest")
    return out.squeeze().numpy().astype(np.uint8)


def preprocess(
    raw: np.ndarray,
    canonical_size: int = 512,
    image_id: str = "",
    domain: str = "source",
) -> FundusImage:
    """Normalize a raw color array into a canonical-size FundusImage."""
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ChannelError(f"expected an HxWx3 color array, got shape {raw.shape}")
    if raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ChannelError("image dimensions must be positive")
    native = (raw.shape[0], raw.shape[1])
    pixels = resize_image(_to_unit_float(raw), canonical_size)
    return FundusImage(id=image_id, pixels=pixels, domain=domain, native_size=native)
