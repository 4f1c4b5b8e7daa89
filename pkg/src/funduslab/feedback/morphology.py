"""Morphological noise for simulated expert annotations.

Square structuring element; pixels outside the image count as background,
so dilation grows into the frame and erosion shrinks from it.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigError


def _window_pool(mask: np.ndarray, kernel: int, take_max: bool) -> np.ndarray:
    pad = kernel // 2
    t = torch.from_numpy(mask.astype(np.float32)).unsqueeze(0).unsqueeze(0)
    t = F.pad(t, (pad, pad, pad, pad), value=0.0)
    if take_max:
        out = F.max_pool2d(t, kernel, stride=1)
    else:
        out = -F.max_pool2d(-t, kernel, stride=1)
    return (out.squeeze().numpy() >= 0.5).astype(np.uint8)


def dilate(mask: np.ndarray, kernel: int) -> np.ndarray:
    return _window_pool(mask, kernel, take_max=True)


def erode(mask: np.ndarray, kernel: int) -> np.ndarray:
    return _window_pool(mask, kernel, take_max=False)


def perturb_mask(mask: np.ndarray, kernel: int, mode: str = "random", seed: int = 0) -> np.ndarray:
    """Erode or dilate a binary mask with a kernel x kernel square element.

    ``random`` picks erosion or dilation per mask with a seeded fair coin.
    A kernel of 1 is the identity.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"kernel must be odd and >= 1, got {kernel}")
    if mode not in ("erode", "dilate", "random"):
        raise ConfigError(f"unknown mode {mode!r}")
    mask = np.asarray(mask).astype(np.uint8)
    if kernel == 1:
        return mask.copy()
    if mode == "random":
        rng = np.random.default_rng(seed)
        mode = "dilate" if rng.integers(0, 2) == 1 else "erode"
    return dilate(mask, kernel) if mode == "dilate" else erode(mask, kernel)
