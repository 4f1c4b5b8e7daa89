"""Activation maps: gradient-weighted CAM for the CNN backbone and
attention rollout for the transformer backbone.

CAM weights are the global-average-pooled gradients of the class score
with respect to the last-block activations; the weighted sum is rectified,
max-normalized to [0, 1], and upsampled to input resolution. The rollout
recursion renormalizes (A + I) rows so the product stays row-stochastic.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ShapeError, UnsupportedBackboneError


def threshold_map(am, sigma: float = 0.5, omega: float = 100.0):
    """Soft gate 1 / (1 + exp(-omega * (am - sigma))), monotone in am."""
    if isinstance(am, torch.Tensor):
        return torch.sigmoid(omega * (am - sigma))
    am = np.asarray(am, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-omega * (am - sigma)))


def normalize_map(am: torch.Tensor) -> torch.Tensor:
    """Scale a nonnegative map by its max so sigma is scale-meaningful."""
    peak = am.max()
    if float(peak.detach()) <= 0.0:
        return am
    return am / peak


def _cam_from_activations(
    score: torch.Tensor, activations: torch.Tensor, create_graph: bool = False
) -> torch.Tensor:
    """relu(sum_k GAP(d score / d f_k) * f_k) for one sample (C, h, w)."""
    grads = torch.autograd.grad(score, activations, create_graph=create_graph)[0]
    weights = grads.mean(dim=(-2, -1), keepdim=True)  # GAP over spatial dims
    if not create_graph:
        activations = activations.detach()
    return F.relu((weights * activations).sum(dim=-3))


def grad_cam(model, x, class_id: int) -> np.ndarray:
    """Raw class activation map at input resolution, values >= 0.

    CNN backbones only; transformer saliency goes through
    ``attention_rollout``.
    """
    if getattr(model, "backbone_kind", "cnn") != "cnn":
        raise UnsupportedBackboneError("grad_cam requires the CNN backbone")
    from ..seg.models import image_to_tensor

    t = image_to_tensor(x) if hasattr(x, "pixels") else x
    if t.dim() == 3:
        t = t.unsqueeze(0)
    was_training = model.training
    model.eval()
    t = t.requires_grad_(True)
    _, f_last, logits = model.forward_features(t)
    am = _cam_from_activations(logits[0, class_id], f_last)
    am = F.interpolate(
        am.unsqueeze(0), size=t.shape[-2:], mode="bilinear", align_corners=False
    ).squeeze()
    if was_training:
        model.train()
    return am.detach().numpy()


def differentiable_cam(
    score: torch.Tensor, activations: torch.Tensor, out_size: tuple[int, int]
) -> torch.Tensor:
    """Training-time CAM keeping the graph so the overlap loss can backprop."""
    am = _cam_from_activations(score, activations, create_graph=True)
    am = F.interpolate(
        am.unsqueeze(0), size=out_size, mode="bilinear", align_corners=False
    ).squeeze(0).squeeze(0)
    return normalize_map(am)


def attention_rollout(per_layer_attention: list) -> np.ndarray:
    """Aggregate per-layer (heads-averaged) attention into token saliency.

    Each matrix must be square and row-stochastic within 1e-5. Starting
    from the identity, every layer contributes rownorm(A + I); the result
    stays row-stochastic.
    """
    matrices = [
        m.detach().cpu().numpy() if isinstance(m, torch.Tensor) else np.asarray(m, dtype=np.float64)
        for m in per_layer_attention
    ]
    if not matrices:
        raise ShapeError("need at least one attention matrix")
    size = matrices[0].shape[0]
    rollout = np.eye(size)
    for mat in matrices:
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ShapeError(f"attention matrix must be square, got {mat.shape}")
        if mat.shape[0] != size:
            raise ShapeError("attention matrices disagree on token count")
        if np.abs(mat.sum(axis=1) - 1.0).max() > 1e-5:
            raise ShapeError("attention matrix rows must sum to 1")
        augmented = mat + np.eye(size)
        augmented = augmented / augmented.sum(axis=1, keepdims=True)
        rollout = augmented @ rollout
    return rollout


def rollout_to_map(rollout: np.ndarray, grid: int, out_size: tuple[int, int]) -> np.ndarray:
    """Class-token attention row reshaped to a spatial saliency map."""
    row = rollout[0, 1:]
    if row.size != grid * grid:
        raise ShapeError(f"{row.size} patch tokens do not fill a {grid}x{grid} grid")
    spatial = row.reshape(grid, grid)
    t = torch.from_numpy(spatial).unsqueeze(0).unsqueeze(0).float()
    resized = F.interpolate(t, size=out_size, mode="bilinear", align_corners=False)
    return resized.squeeze().numpy()


def transformer_cam(model, x, class_id: int = 0) -> np.ndarray:
    """Rollout-based saliency at input resolution for the transformer."""
    from ..seg.models import image_to_tensor

    t = image_to_tensor(x) if hasattr(x, "pixels") else x
    if t.dim() == 3:
        t = t.unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        _, attentions = model.forward_with_attention(t)
    if was_training:
        model.train()
    rollout = attention_rollout([a[0] for a in attentions])
    return rollout_to_map(rollout, model.grid, t.shape[-2:])
