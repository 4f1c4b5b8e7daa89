"""Validated training configuration.

One flat record holds every loss weight, threshold, optimizer and schedule
setting. Defaults follow the published full-scale recipe; ``desk()`` returns
a small preset that trains in minutes on CPU for tests and demos.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

LESIONS = ("MA", "HE", "EX", "SE")
NUM_GRADES = 5


@dataclass
class TrainingConfig:
    # data
    canonical_size: int = 512
    validation_fraction: float = 0.10
    synthetic_grade_tau: float = 0.05
    dataset_root: str = ""
    target_root: str = ""

    # segmentation loss
    beta: float = 10.0

    # adaptation loss weights
    lambda_p: float = 1e-2
    lambda_w: float = 1e-3
    lambda_adv: float = 1e-3
    lambda_ent: float = 1e-3
    eta: float = 10.0

    # activation-map thresholding
    sigma: float = 0.5
    omega: float = 100.0
    lesion_bin_threshold: float = 0.5
    cam_bin_threshold: float = 0.5

    # optimizer
    optimizer: str = "sgd"
    learning_rate: float = 1e-4
    cyclic_max_lr: float = 1e-2
    momentum: float = 0.9
    critic_learning_rate: float = 1e-4

    # batch sizes and schedule
    seg_batch_size: int = 8
    grading_batch_size: int = 16
    pretext_epochs: int = 20
    seg_epochs: int = 40
    adapt_epochs: int = 20
    grading_epochs: int = 30
    attention_epochs: int = 20
    n_critic: int = 1
    feedback_epoch_fraction: float = 0.2
    feedback_lr_factor: float = 0.1
    feedback_restart: bool = False

    # architecture presets
    seg_depth: int = 3
    seg_base_width: int = 16
    grading_widths: tuple[int, ...] = (16, 32, 64, 64, 128)
    backbone_kind: str = "cnn"
    patch_grid: int = 16
    critic_widths: tuple[int, ...] = (128, 64)

    # evaluation
    pooled_pixel_auc: bool = True
    overlap_uses_ground_truth: bool = False

    # augmentation (non-authoritative: flips + small rotations + brightness jitter)
    augment: bool = False

    # noise simulation
    noise_kernel_base: int = 15

    seed: int = 0

    def __post_init__(self) -> None:
        self.grading_widths = tuple(self.grading_widths)
        self.critic_widths = tuple(self.critic_widths)
        self.validate()

    def validate(self) -> None:
        for name in ("lambda_p", "lambda_w", "lambda_adv", "lambda_ent", "eta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if self.omega <= 0:
            raise ConfigError(f"omega must be > 0, got {self.omega}")
        for name in ("seg_batch_size", "grading_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.canonical_size < 32:
            raise ConfigError(f"canonical_size must be >= 32, got {self.canonical_size}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if not 0.0 < self.lesion_bin_threshold < 1.0:
            raise ConfigError("lesion_bin_threshold must be in (0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.backbone_kind not in ("cnn", "transformer"):
            raise ConfigError(f"backbone_kind must be 'cnn' or 'transformer', got {self.backbone_kind!r}")
        if self.noise_kernel_base % 2 == 0:
            raise ConfigError("noise_kernel_base must be odd")

    @classmethod
    def desk(cls, **overrides) -> "TrainingConfig":
        """Small CPU preset: 64 px inputs, narrow networks, Adam."""
        defaults = dict(
            canonical_size=64,
            seg_depth=3,
            seg_base_width=8,
            grading_widths=(8, 16, 16, 32, 32),
            optimizer="adam",
            learning_rate=1e-3,
            critic_learning_rate=1e-3,
            pretext_epochs=12,
            seg_epochs=16,
            adapt_epochs=12,
            grading_epochs=16,
            attention_epochs=10,
            seg_batch_size=8,
            grading_batch_size=8,
            patch_grid=8,
            # short schedules leave the segmenters hedging below 0.5 on
            # true lesions; the union operating point follows suit
            lesion_bin_threshold=0.30,
        )
        defaults.update(overrides)
        return cls(**defaults)

    @property
    def noise_kernel(self) -> int:
        """Morphology kernel scaled so the 512-px ratio is kept at any size."""
        k = max(3, round(self.noise_kernel_base * self.canonical_size / 512))
        return k if k % 2 == 1 else k + 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grading_widths"] = list(self.grading_widths)
        d["critic_widths"] = list(self.critic_widths)
        return d

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]

    def replace(self, **overrides) -> "TrainingConfig":
        return dataclasses.replace(self, **overrides)


_FIELD_NAMES = {f.name for f in dataclasses.fields(TrainingConfig)}


def config_from_dict(raw: dict) -> TrainingConfig:
    unknown = sorted(set(raw) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return TrainingConfig(**raw)


def parse_config(path: str | Path) -> TrainingConfig:
    """Load a JSON config file; empty file means all defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text().strip()
    if not text:
        return TrainingConfig()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object")
    return config_from_dict(raw)
