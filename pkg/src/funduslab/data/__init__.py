from .io import LAYOUTS, load_dataset, write_dataset
from .preprocess import preprocess, resize_image, resize_mask
from .rasterize import rasterize
from .synthetic import apply_domain_shift, grade_from_area, make_synthetic
from .types import (
    AnnotationGeometry,
    DatasetSplit,
    FundusImage,
    GradeLabel,
    LesionMaskSet,
    Sample,
)

__all__ = [
    "AnnotationGeometry",
    "DatasetSplit",
    "FundusImage",
    "GradeLabel",
    "LesionMaskSet",
    "Sample",
    "LAYOUTS",
    "load_dataset",
    "write_dataset",
    "preprocess",
    "resize_image",
    "resize_mask",
    "rasterize",
    "make_synthetic",
    "apply_domain_shift",
    "grade_from_area",
]
