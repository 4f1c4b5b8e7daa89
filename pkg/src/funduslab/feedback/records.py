"""Expert feedback records and the slice-based simulation schedule."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..data.types import AnnotationGeometry
from ..errors import ConfigError, LabelError, StateError

_STATUS_ORDER = ("pending", "accepted", "consumed")


@dataclass
class FeedbackRecord:
    """Expert-drawn geometries and/or a corrected grade for one case.

    Status only moves forward: pending -> accepted -> consumed.
    """

    case_id: str
    geometries: list[AnnotationGeometry] = field(default_factory=list)
    corrected_grade: Optional[int] = None
    reviewer: str = ""
    timestamp: str = ""
    status: str = "pending"
    record_id: str = ""

    def __post_init__(self) -> None:
        if not self.geometries and self.corrected_grade is None:
            raise ConfigError("feedback needs at least one geometry or a corrected grade")
        if self.corrected_grade is not None and self.corrected_grade not in range(5):
            raise LabelError(f"corrected grade {self.corrected_grade} outside [0, 4]")
        if self.status not in _STATUS_ORDER:
            raise StateError(f"unknown status {self.status!r}")
        if not self.timestamp:
            self.timestamp = dt.datetime.now(dt.timezone.utc).isoformat()

    def advance(self, new_status: str) -> None:
        if new_status not in _STATUS_ORDER:
            raise StateError(f"unknown status {new_status!r}")
        if _STATUS_ORDER.index(new_status) < _STATUS_ORDER.index(self.status):
            raise StateError(f"cannot move {self.status} -> {new_status}")
        self.status = new_status

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "case_id": self.case_id,
            "corrected_grade": self.corrected_grade,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
            "status": self.status,
            "geometries": [
                {
                    "kind": g.kind,
                    "lesion": g.lesion,
                    "coordinates": [[x, y] for x, y in g.coordinates],
                }
                for g in self.geometries
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FeedbackRecord":
        geometries = [
            AnnotationGeometry(
                kind=g["kind"],
                coordinates=tuple((p[0], p[1]) for p in g["coordinates"]),
                lesion=g["lesion"],
            )
            for g in raw.get("geometries", [])
        ]
        return cls(
            case_id=raw["case_id"],
            geometries=geometries,
            corrected_grade=raw.get("corrected_grade"),
            reviewer=raw.get("reviewer", ""),
            timestamp=raw.get("timestamp", ""),
            status=raw.get("status", "pending"),
            record_id=raw.get("record_id", ""),
        )


@dataclass(frozen=True)
class FeedbackSchedule:
    """Half the ids as the base set, the rest in five near-equal slices."""

    base_ids: tuple[str, ...]
    slices: tuple[tuple[str, ...], ...]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_ids", tuple(self.base_ids))
        object.__setattr__(self, "slices", tuple(tuple(s) for s in self.slices))
        if len(self.slices) != 5:
            raise ConfigError(f"schedule needs exactly 5 slices, got {len(self.slices)}")
        sizes = [len(s) for s in self.slices]
        if max(sizes) - min(sizes) > 1:
            raise ConfigError(f"slice sizes must stay within 1 of each other: {sizes}")
        everything = list(self.base_ids) + [i for s in self.slices for i in s]
        if len(set(everything)) != len(everything):
            raise ConfigError("schedule ids overlap")


def build_schedule(train_ids: list[str], seed: int) -> FeedbackSchedule:
    """Seeded shuffle, floor-half base, remainder into five slices with the
    leftover spread over the earliest slices."""
    ids = list(train_ids)
    if len(ids) < 12:
        raise ConfigError(f"need at least 12 ids to build a schedule, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_base = len(ids) // 2
    base = shuffled[:n_base]
    rest = shuffled[n_base:]
    per_slice, extra = divmod(len(rest), 5)
    slices = []
    cursor = 0
    for k in range(5):
        size = per_slice + (1 if k < extra else 0)
        slices.append(tuple(rest[cursor : cursor + size]))
        cursor += size
    return FeedbackSchedule(base_ids=tuple(base), slices=tuple(slices), seed=seed)
