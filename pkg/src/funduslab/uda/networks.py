"""Adversarial support networks for domain-invariant segmentation.

Three adversaries with distinct jobs: a conditional patch discriminator
judging image+mask patches, a scalar-valued domain critic over encoder
features, and a convolutional discriminator over weighted self-information
maps.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class PatchDiscriminator(nn.Module):
    """Real/fake decision per image+mask patch.

    Two strided conv layers, a dense layer, and a sigmoid head; one scalar
    in (0, 1) per patch cell.
    """

    def __init__(self, patch_size: int, patch_grid: int = 16, in_channels: int = 4,
                 width: int = 16, dense: int = 64):
        super().__init__()
        self.patch_grid = patch_grid
        self.patch_size = patch_size
        reduced = max(1, patch_size // 4)
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(width * 2 * reduced * reduced, dense),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(dense, 1),
        )

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """(N, C, ph, pw) patches -> (N,) probabilities."""
        return torch.sigmoid(self.classifier(self.features(patches))).squeeze(-1)


class DomainCritic(nn.Module):
    """Scalar critic over flattened encoder features (no output squashing)."""

    def __init__(self, in_features: int, widths: tuple[int, ...] = (128, 64)):
        super().__init__()
        self.layer_widths = tuple(widths) + (1,)
        layers: list[nn.Module] = []
        prev = in_features
        for w in widths:
            layers += [nn.Linear(prev, w), nn.ReLU(inplace=True)]
            prev = w
        layers.append(nn.Linear(prev, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        """(B, d) feature vectors -> (B,) critic scores."""
        return self.net(h).squeeze(-1)


class EntropyDiscriminator(nn.Module):
    """Domain classifier over self-information maps; 1 = source-like."""

    def __init__(self, in_channels: int = 2, width: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width * 2, width * 2, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(width * 2, 1),
        )

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        """(B, C, h, w) self-information maps -> (B,) probabilities."""
        return torch.sigmoid(self.net(maps)).squeeze(-1)


def flatten_features(feature_map: torch.Tensor, pooled: bool = True) -> torch.Tensor:
    """(B, C, h, w) encoder output -> flat critic input.

    Pooled mode averages out the spatial dims first (channel statistics,
    C-dimensional) which keeps the critic sample-efficient; unpooled mode
    flattens everything.
    """
    if pooled:
        return feature_map.mean(dim=(-2, -1))
    return feature_map.flatten(start_dim=1)
