"""Core dataset records.

All records are immutable after construction and validate their own
invariants, so loaders can hand them out across threads freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import LESIONS
from ..errors import DataIntegrityError, GeometryError, LabelError

DOMAINS = ("source", "target")


@dataclass(frozen=True)
class FundusImage:
    """Color retina image with pixel values in [0, 1]."""

    id: str
    pixels: np.ndarray  # H x W x 3 float32
    domain: str = "source"
    native_size: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DataIntegrityError(f"pixels must be HxWx3, got {pixels.shape}")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise DataIntegrityError("pixel values must lie in [0, 1]")
        if self.domain not in DOMAINS:
            raise DataIntegrityError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        object.__setattr__(self, "pixels", pixels)
        if self.native_size == (0, 0):
            object.__setattr__(self, "native_size", (pixels.shape[0], pixels.shape[1]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class LesionMaskSet:
    """Binary masks for the four lesion classes, aligned to one image."""

    image_id: str
    masks: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if set(self.masks) != set(LESIONS):
            raise DataIntegrityError(
                f"mask set must carry exactly {LESIONS}, got {sorted(self.masks)}"
            )
        clean = {}
        shapes = set()
        for lesion, mask in self.masks.items():
            mask = np.asarray(mask)
            if not np.isin(mask, (0, 1)).all():
                raise DataIntegrityError(f"{lesion} mask is not binary")
            clean[lesion] = mask.astype(np.uint8)
            shapes.add(mask.shape)
        if len(shapes) != 1:
            raise DataIntegrityError(f"masks disagree on shape: {shapes}")
        object.__setattr__(self, "masks", clean)

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.masks.values())).shape

    def union(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.uint8)
        for mask in self.masks.values():
            out |= mask
        return out


@dataclass(frozen=True)
class GradeLabel:
    """Disease severity on the five-grade ordinal scale."""

    image_id: str
    grade: int

    def __post_init__(self) -> None:
        if self.grade not in (0, 1, 2, 3, 4):
            raise LabelError(f"grade must be in [0, 4], got {self.grade}")


@dataclass(frozen=True)
class Sample:
    image: FundusImage
    masks: Optional[LesionMaskSet] = None
    grade: Optional[GradeLabel] = None

    def __post_init__(self) -> None:
        if self.masks is not None and self.masks.image_id != self.image.id:
            raise DataIntegrityError("mask set paired with the wrong image")
        if self.masks is not None and self.masks.shape != self.image.shape:
            raise DataIntegrityError(
                f"mask shape {self.masks.shape} != image shape {self.image.shape}"
            )
        if self.grade is not None and self.grade.image_id != self.image.id:
            raise DataIntegrityError("grade paired with the wrong image")


@dataclass(frozen=True)
class DatasetSplit:
    """Train/test partitions of samples, disjoint by image id."""

    name: str
    train: tuple[Sample, ...]
    test: tuple[Sample, ...]
    validation_fraction: float = 0.10

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        train_ids = {s.image.id for s in self.train}
        test_ids = {s.image.id for s in self.test}
        overlap = train_ids & test_ids
        if overlap:
            raise DataIntegrityError(f"train/test ids overlap: {sorted(overlap)[:5]}")

    def train_ids(self) -> list[str]:
        return [s.image.id for s in self.train]

    def with_train(self, train: tuple[Sample, ...]) -> "DatasetSplit":
        return DatasetSplit(self.name, tuple(train), self.test, self.validation_fraction)


@dataclass(frozen=True)
class AnnotationGeometry:
    """Expert-drawn region: box, circle, closed polygon, or a raw raster."""

    kind: str
    coordinates: tuple[tuple[float, float], ...]
    lesion: str
    raster: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in ("box", "circle", "polygon", "raster"):
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if self.lesion not in LESIONS:
            raise GeometryError(f"unknown lesion {self.lesion!r}")
        object.__setattr__(
            self,
            "coordinates",
            tuple((float(x), float(y)) for x, y in self.coordinates),
        )
        if self.kind == "raster":
            if self.raster is None:
                raise GeometryError("raster geometry requires a raster payload")
            raster = np.asarray(self.raster)
            if not np.isin(raster, (0, 1)).all():
                raise GeometryError("raster payload must be binary")
            object.__setattr__(self, "raster", raster.astype(np.uint8))
        elif self.kind == "box" and len(self.coordinates) != 2:
            raise GeometryError("box needs exactly two corner points")
        elif self.kind == "circle" and len(self.coordinates) != 2:
            raise GeometryError("circle needs a center and a circumference point")
