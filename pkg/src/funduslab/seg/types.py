"""Prediction record for the four lesion segmenters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import LESIONS
from ..errors import DataIntegrityError


@dataclass(frozen=True)
class LesionPredictionSet:
    """Per-lesion probability maps in [0, 1], all four lesions present."""

    image_id: str
    probs: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if set(self.probs) != set(LESIONS):
            raise DataIntegrityError(
                f"prediction set must carry exactly {LESIONS}, got {sorted(self.probs)}"
            )
        clean = {}
        for lesion, arr in self.probs.items():
            arr = np.asarray(arr, dtype=np.float32)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DataIntegrityError(f"{lesion} probabilities outside [0, 1]")
            clean[lesion] = arr
        object.__setattr__(self, "probs", clean)

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.probs.values())).shape
