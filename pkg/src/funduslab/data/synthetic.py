"""Deterministic synthetic fundus generator.

Produces retina-like disks with elliptical lesions of four visually
distinct classes, exact masks, and a grade that grows monotonically with
total lesion area. The target domain applies a global intensity/contrast
transform of configurable magnitude, which is what the adaptation
machinery has to undo.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import LESIONS
from ..errors import ConfigError
from .types import DatasetSplit, FundusImage, GradeLabel, LesionMaskSet, Sample

# per-class appearance: (max count, radius as fraction of size, RGB color)
_LESION_STYLE = {
    "MA": (6, 0.022, (0.30, 0.05, 0.05)),
    "HE": (3, 0.060, (0.42, 0.10, 0.08)),
    "EX": (4, 0.038, (0.95, 0.90, 0.45)),
    "SE": (2, 0.075, (0.90, 0.82, 0.70)),
}

_TRAIN_FRACTION = 0.75


def grade_from_area(area_fraction: float, tau: float) -> int:
    """Monotone area-to-grade rule: clamp(floor(5 * frac / tau), 0, 4)."""
    return int(min(4, max(0, math.floor(5.0 * area_fraction / tau))))


def apply_domain_shift(pixels: np.ndarray, shift: float) -> np.ndarray:
    """Global contrast/brightness/tint transform of magnitude ``shift``."""
    if shift == 0.0:
        return pixels
    contrast = 1.0 - 0.6 * shift
    brightness = -0.20 * shift
    out = (pixels - 0.5) * contrast + 0.5 + brightness
    out[..., 0] *= 1.0 - 0.25 * shift  # red channel tint
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _ellipse_mask(size: int, cx, cy, rx, ry, angle) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    ca, sa = np.cos(angle), np.sin(angle)
    u = (xs - cx) * ca + (ys - cy) * sa
    v = -(xs - cx) * sa + (ys - cy) * ca
    return ((u / rx) ** 2 + (v / ry) ** 2 <= 1.0).astype(np.uint8)


def _fundus_background(size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    center = size / 2.0
    r = np.hypot(xs - center, ys - center) / center
    disk = (r <= 0.96).astype(np.float32)
    base = np.array([0.72, 0.38, 0.16]) * (0.75 + 0.25 * rng.random())
    falloff = np.clip(1.0 - 0.45 * r**2, 0.0, 1.0).astype(np.float32)
    img = np.zeros((size, size, 3), dtype=np.float32)
    for c in range(3):
        img[..., c] = base[c] * falloff * disk
    # a couple of dark vessel arcs
    for _ in range(2):
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.1, 0.3) * size
        row0 = rng.uniform(0.3, 0.7) * size
        width = max(1.0, size / 60.0)
        rows = row0 + amp * np.sin(xs[0] / size * 2 * np.pi + phase)
        dist = np.abs(ys - rows[None, :])
        vessel = np.clip(1.0 - dist / width, 0.0, 1.0) * disk
        img *= (1.0 - 0.5 * vessel)[..., None]
    return img, disk


def _synth_sample(
    image_id: str, size: int, severity: float, rng: np.random.Generator, tau: float,
    domain: str, shift: float,
) -> Sample:
    img, disk = _fundus_background(size, rng)
    masks = {}
    for lesion in LESIONS:
        max_count, rad_frac, color = _LESION_STYLE[lesion]
        count = int(round(severity * max_count * rng.random()))
        mask = np.zeros((size, size), dtype=np.uint8)
        for _ in range(count):
            radius = rad_frac * size * rng.uniform(0.7, 1.3)
            cx = rng.uniform(0.2, 0.8) * size
            cy = rng.uniform(0.2, 0.8) * size
            blob = _ellipse_mask(
                size, cx, cy, radius, radius * rng.uniform(0.6, 1.0), rng.uniform(0, np.pi)
            )
            blob &= disk.astype(np.uint8)
            mask |= blob
        masks[lesion] = mask
        # faint blend: lesions must be hard to read from raw pixels so the
        # segmentation-guided paths have authentic value
        alpha = 0.45 * mask[..., None].astype(np.float32)
        img = img * (1 - alpha) + np.array(color, dtype=np.float32) * alpha
    union = np.zeros((size, size), dtype=np.uint8)
    for mask in masks.values():
        union |= mask
    grade = grade_from_area(union.sum() / (size * size), tau)
    pixels = apply_domain_shift(np.clip(img, 0.0, 1.0).astype(np.float32), shift)
    image = FundusImage(id=image_id, pixels=pixels, domain=domain)
    return Sample(
        image=image,
        masks=LesionMaskSet(image_id=image_id, masks=masks),
        grade=GradeLabel(image_id=image_id, grade=grade),
    )


def _synth_domain(
    name: str, prefix: str, seed_key: list[int], n: int, size: int, tau: float,
    domain: str, shift: float,
) -> DatasetSplit:
    rng = np.random.default_rng(seed_key)
    samples = []
    for i in range(n):
        severity = rng.random()
        samples.append(
            _synth_sample(f"{prefix}-{i:03d}", size, severity, rng, tau, domain, shift)
        )
    n_train = max(1, int(round(_TRAIN_FRACTION * n)))
    if n_train >= n:
        n_train = n - 1
    return DatasetSplit(name=name, train=tuple(samples[:n_train]), test=tuple(samples[n_train:]))


def make_synthetic(
    seed: int, n: int, size: int, domain_shift: float, tau: float = 0.05
) -> tuple[DatasetSplit, DatasetSplit]:
    """Generate paired source/target synthetic datasets.

    Identical seeds give bit-identical output. With ``domain_shift`` zero the
    two domains share the same generator law.
    """
    if size < 32:
        raise ConfigError(f"size must be >= 32, got {size}")
    if n < 4:
        raise ConfigError(f"n must be >= 4, got {n}")
    source = _synth_domain("synthetic-source", "src", [seed, 0], n, size, tau, "source", 0.0)
    target = _synth_domain(
        "synthetic-target", "tgt", [seed, 1], n, size, tau, "target", domain_shift
    )
    return source, target
