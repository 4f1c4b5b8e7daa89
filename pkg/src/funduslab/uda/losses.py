"""Adaptation losses: patch adversarial, Wasserstein critic with gradient
penalty, entropy maps, and the combined objective.

All adversarial logs are clamped at 1e-7. Entropy uses natural logs with
the 0*log(0) = 0 convention; the per-pixel map is normalized by log(C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..config import TrainingConfig
from ..errors import NormalizationError, NumericalError, ShapeError

LOG_EPS = 1e-7


@dataclass(frozen=True)
class UdaWeights:
    lambda_p: float = 1e-2
    lambda_w: float = 1e-3
    lambda_adv: float = 1e-3
    lambda_ent: float = 1e-3
    eta: float = 10.0

    def __post_init__(self) -> None:
        for name in ("lambda_p", "lambda_w", "lambda_adv", "lambda_ent", "eta"):
            if getattr(self, name) < 0:
                raise NumericalError(f"{name} must be >= 0")

    @classmethod
    def from_config(cls, config: TrainingConfig) -> "UdaWeights":
        return cls(config.lambda_p, config.lambda_w, config.lambda_adv,
                   config.lambda_ent, config.eta)


def _clog(x: torch.Tensor) -> torch.Tensor:
    return torch.log(x.clamp(LOG_EPS, 1.0))


def split_patches(stacked, grid: int) -> list:
    """Tile an HxWxC array into grid^2 patches, row-major."""
    h, w = stacked.shape[0], stacked.shape[1]
    if h % grid or w % grid:
        raise ShapeError(f"grid {grid} must divide {h}x{w}")
    ph, pw = h // grid, w // grid
    return [
        stacked[i * ph : (i + 1) * ph, j * pw : (j + 1) * pw]
        for i in range(grid)
        for j in range(grid)
    ]


def join_patches(patches: list, grid: int):
    """Inverse of split_patches for the reconstruction property."""
    if isinstance(patches[0], torch.Tensor):
        rows = [torch.cat(patches[i * grid : (i + 1) * grid], dim=1) for i in range(grid)]
        return torch.cat(rows, dim=0)
    rows = [np.concatenate(patches[i * grid : (i + 1) * grid], axis=1) for i in range(grid)]
    return np.concatenate(rows, axis=0)


def batch_to_patches(stacked: torch.Tensor, grid: int) -> torch.Tensor:
    """(B, C, H, W) -> (B * grid^2, C, H/grid, W/grid), row-major per item."""
    b, c, h, w = stacked.shape
    if h % grid or w % grid:
        raise ShapeError(f"grid {grid} must divide {h}x{w}")
    ph, pw = h // grid, w // grid
    x = stacked.reshape(b, c, grid, ph, grid, pw)
    x = x.permute(0, 2, 4, 1, 3, 5)
    return x.reshape(b * grid * grid, c, ph, pw)


def patch_adv_loss(pd, image, pred, gt) -> tuple[torch.Tensor, torch.Tensor]:
    """Conditional patch-adversarial losses for one image.

    The discriminator sees channel-concatenated image+mask patches:
    real = image (+) ground truth, fake = image (+) prediction.
    Returns (d_loss, g_loss).
    """
    image_t = _chw(image, channels=3)
    pred_t = _chw(pred, channels=1)
    gt_t = _chw(gt, channels=1).to(pred_t.dtype)
    if image_t.shape[1:] != pred_t.shape[1:] or pred_t.shape != gt_t.shape:
        raise ShapeError("image, prediction, and ground truth must align spatially")
    grid = pd.patch_grid
    real = batch_to_patches(torch.cat([image_t, gt_t], dim=0).unsqueeze(0), grid)
    fake = batch_to_patches(torch.cat([image_t, pred_t], dim=0).unsqueeze(0), grid)
    d_real = pd(real)
    d_fake = pd(fake)
    d_loss = -(_clog(d_real) + _clog(1.0 - d_fake)).mean()
    g_loss = -_clog(d_fake).mean()
    return d_loss, g_loss


def _chw(array, channels: int) -> torch.Tensor:
    """Accept FundusImage, HxW, HxWxC, or CxHxW input; return CxHxW."""
    if hasattr(array, "pixels"):  # FundusImage
        array = array.pixels
    t = array if isinstance(array, torch.Tensor) else torch.as_tensor(np.asarray(array), dtype=torch.float32)
    if t.dim() == 2:
        t = t.unsqueeze(0)
    elif t.dim() == 3 and t.shape[0] != channels and t.shape[2] == channels:
        t = t.permute(2, 0, 1)
    return t


def wasserstein_loss(critic, h_source: torch.Tensor, h_target: torch.Tensor) -> torch.Tensor:
    """Empirical distance surrogate: mean W(h_s) - mean W(h_t)."""
    if h_source.numel() == 0 or h_target.numel() == 0:
        raise ShapeError("batches must be non-empty")
    if h_source.shape[-1] != h_target.shape[-1]:
        raise ShapeError(
            f"feature widths differ: {h_source.shape[-1]} vs {h_target.shape[-1]}"
        )
    return critic(h_source).mean() - critic(h_target).mean()


def gradient_penalty(
    critic, h_source: torch.Tensor, h_target: torch.Tensor, seed: int = 0
) -> torch.Tensor:
    """Mean squared deviation of the critic's gradient norm from 1.

    Evaluated at the source points, the target points, and one seeded
    convex combination per source-target pair.
    """
    if h_source.numel() == 0 or h_target.numel() == 0:
        raise ShapeError("batches must be non-empty")
    n = min(len(h_source), len(h_target))
    gen = torch.Generator().manual_seed(seed)
    if len(h_source) > n:
        h_source = h_source[torch.randperm(len(h_source), generator=gen)[:n]]
    if len(h_target) > n:
        h_target = h_target[torch.randperm(len(h_target), generator=gen)[:n]]
    eps = torch.rand(n, 1, generator=gen, dtype=h_source.dtype)
    mixed = eps * h_source + (1.0 - eps) * h_target
    points = torch.cat([h_source, h_target, mixed], dim=0).detach().requires_grad_(True)
    scores = critic(points)
    grads = torch.autograd.grad(
        scores.sum(), points, create_graph=torch.is_grad_enabled()
    )[0]
    norms = grads.flatten(start_dim=1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def _check_distribution(probs: torch.Tensor) -> None:
    if probs.shape[-1] < 2:
        raise NormalizationError("need at least two class scores per pixel")
    with torch.no_grad():
        if float(probs.min()) < -1e-7:
            raise NormalizationError("class scores must be nonnegative")
        if float((probs.sum(dim=-1) - 1.0).abs().max()) > 1e-5:
            raise NormalizationError("per-pixel class scores must sum to 1")


def entropy_map(probs) -> "np.ndarray | torch.Tensor":
    """Normalized Shannon entropy per pixel: -(1/log C) sum P log P, in [0, 1]."""
    was_numpy = not isinstance(probs, torch.Tensor)
    t = torch.as_tensor(np.asarray(probs) if was_numpy else probs)
    t = t.double() if was_numpy else t
    _check_distribution(t)
    c = t.shape[-1]
    plogp = torch.where(t > 0, t * torch.log(t.clamp_min(LOG_EPS**2)), torch.zeros_like(t))
    ent = (-plogp.sum(dim=-1) / math.log(c)).clamp(0.0, 1.0)
    return ent.numpy() if was_numpy else ent


def entropy_loss(emap) -> torch.Tensor:
    """Sum of the per-pixel normalized entropies."""
    t = emap if isinstance(emap, torch.Tensor) else torch.as_tensor(np.asarray(emap))
    return t.sum()


def self_information_map(probs) -> "np.ndarray | torch.Tensor":
    """Weighted self-information: -P * log P elementwise, 0 log 0 = 0."""
    was_numpy = not isinstance(probs, torch.Tensor)
    t = torch.as_tensor(np.asarray(probs) if was_numpy else probs)
    t = t.double() if was_numpy else t
    _check_distribution(t)
    out = torch.where(t > 0, -t * torch.log(t.clamp_min(LOG_EPS**2)), torch.zeros_like(t))
    return out.numpy() if was_numpy else out


def binary_prob_pair(pred: torch.Tensor) -> torch.Tensor:
    """Binary segmenter output (..., H, W) -> per-pixel (background, lesion) pair."""
    return torch.stack([1.0 - pred, pred], dim=-1)


def domain_adv_loss(ad, i_source, i_target) -> tuple[torch.Tensor, torch.Tensor]:
    """Entropy-discriminator losses over self-information maps.

    d_loss trains the discriminator (source -> 1, target -> 0); g_loss is
    the generator term pushing target maps to read as source-like.
    """
    s = _maps_nchw(i_source)
    t = _maps_nchw(i_target)
    if s.shape[1:] != t.shape[1:]:
        raise ShapeError(f"map shapes differ: {tuple(s.shape)} vs {tuple(t.shape)}")
    d_loss = -(_clog(ad(s)).mean() + _clog(1.0 - ad(t)).mean())
    g_loss = -_clog(ad(t)).mean()
    return d_loss, g_loss


def _maps_nchw(maps) -> torch.Tensor:
    """Single maps arrive channels-last (h, w, C); batches arrive NCHW."""
    t = maps if isinstance(maps, torch.Tensor) else torch.as_tensor(np.asarray(maps), dtype=torch.float32)
    if t.dim() == 3:
        t = t.permute(2, 0, 1).unsqueeze(0)
    return t.float()


def total_objective(l_seg, l_patch, l_wass, l_adv, w: UdaWeights):
    """Combined adaptation objective with configured coefficients."""
    parts = [l_seg, l_patch, l_wass, l_adv]
    for part in parts:
        value = float(part.detach()) if isinstance(part, torch.Tensor) else float(part)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss component: {value}")
    return l_seg + w.lambda_p * l_patch + w.lambda_w * l_wass + w.lambda_adv * l_adv
