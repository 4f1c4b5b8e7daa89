"""Dataset layout reader/writer.

On-disk convention, per split directory (``train/``, ``test/``):

    images/<id>.png          8-bit RGB
    masks/<LESION>/<id>.png  8-bit grayscale, {0, 255} -> {0, 1}
    grades.csv               header ``id,grade``

A ``manifest.csv`` at the root lists every id with its split and file
paths; loading validates the manifest against what is actually on disk.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import LESIONS
from ..errors import DataIntegrityError, LayoutError
from .types import DatasetSplit, FundusImage, GradeLabel, LesionMaskSet, Sample

LAYOUTS = ("idrid_seg", "fgadr_seg", "idrid_grade", "fgadr_grade", "eyepacs_grade", "synthetic")
_SEG_LAYOUTS = ("idrid_seg", "fgadr_seg", "synthetic")
_GRADED_LAYOUTS = ("idrid_grade", "fgadr_grade", "eyepacs_grade", "synthetic")

MANIFEST_NAME = "manifest.csv"
_MANIFEST_FIELDS = ["id", "split", "image", "grade"] + [f"mask_{l}" for l in LESIONS]


def _save_png_rgb(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def _save_png_mask(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path)


def _load_png_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def _load_png_mask(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr >= 128).astype(np.uint8)


def write_dataset(split: DatasetSplit, root: str | Path, domain_label: str | None = None) -> Path:
    """Write a split to disk in the standard layout, returning the root."""
    root = Path(root)
    rows = []
    for part_name, samples in (("train", split.train), ("test", split.test)):
        part = root / part_name
        grade_rows = []
        for sample in samples:
            sid = sample.image.id
            image_rel = f"{part_name}/images/{sid}.png"
            _save_png_rgb(root / image_rel, sample.image.pixels)
            row = {"id": sid, "split": part_name, "image": image_rel, "grade": ""}
            if sample.grade is not None:
                row["grade"] = str(sample.grade.grade)
                grade_rows.append((sid, sample.grade.grade))
            for lesion in LESIONS:
                key = f"mask_{lesion}"
                row[key] = ""
                if sample.masks is not None:
                    mask_rel = f"{part_name}/masks/{lesion}/{sid}.png"
                    _save_png_mask(root / mask_rel, sample.masks.masks[lesion])
                    row[key] = mask_rel
            rows.append(row)
        if grade_rows:
            part.mkdir(parents=True, exist_ok=True)
            with open(part / "grades.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["id", "grade"])
                writer.writerows(grade_rows)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST_NAME, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return root


def _read_manifest(root: Path) -> list[dict]:
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise LayoutError(f"no {MANIFEST_NAME} under {root}")
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(_MANIFEST_FIELDS) - set(reader.fieldnames):
            raise LayoutError(f"manifest missing required columns {_MANIFEST_FIELDS}")
        return list(reader)


def load_dataset(root: str | Path, layout: str, domain: str = "source") -> DatasetSplit:
    """Load a dataset root into memory, validating the declared layout."""
    if layout not in LAYOUTS:
        raise LayoutError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    root = Path(root)
    if not root.exists():
        raise LayoutError(f"dataset root {root} does not exist")
    rows = _read_manifest(root)
    needs_masks = layout in _SEG_LAYOUTS
    needs_grades = layout in _GRADED_LAYOUTS

    parts: dict[str, list[Sample]] = {"train": [], "test": []}
    for row in rows:
        sid, part = row["id"], row["split"]
        if part not in parts:
            raise LayoutError(f"manifest row {sid!r} has unknown split {part!r}")
        image_path = root / row["image"]
        if not image_path.exists():
            raise DataIntegrityError(f"missing image file {image_path}")
        pixels = _load_png_rgb(image_path)
        image = FundusImage(id=sid, pixels=pixels, domain=domain)

        masks = None
        mask_paths = {l: row[f"mask_{l}"] for l in LESIONS}
        if any(mask_paths.values()):
            loaded = {}
            for lesion in LESIONS:
                rel = mask_paths[lesion]
                if not rel:
                    raise DataIntegrityError(f"{sid}: mask for {lesion} missing from manifest")
                mask_file = root / rel
                if not mask_file.exists():
                    raise DataIntegrityError(f"missing mask file {mask_file}")
                mask = _load_png_mask(mask_file)
                if mask.shape != image.shape:
                    raise DataIntegrityError(
                        f"{sid}: mask {lesion} shape {mask.shape} != image {image.shape}"
                    )
                loaded[lesion] = mask
            masks = LesionMaskSet(image_id=sid, masks=loaded)
        elif needs_masks:
            raise LayoutError(f"layout {layout} requires masks but {sid} has none")

        grade = None
        if row["grade"] != "":
            grade = GradeLabel(image_id=sid, grade=int(row["grade"]))
        elif needs_grades:
            raise LayoutError(f"layout {layout} requires grades but {sid} has none")
        parts[part].append(Sample(image=image, masks=masks, grade=grade))

    if not parts["train"] and not parts["test"]:
        raise LayoutError(f"manifest under {root} lists no samples")
    return DatasetSplit(name=f"{layout}:{root.name}", train=tuple(parts["train"]), test=tuple(parts["test"]))
