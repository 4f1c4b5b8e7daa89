"""Rasterization of expert-drawn geometries into binary masks."""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from .types import AnnotationGeometry


def _check_bounds(points, h: int, w: int) -> None:
    for x, y in points:
        if not (0 <= x < w and 0 <= y < h):
            raise GeometryError(f"point ({x}, {y}) outside [0,{w}) x [0,{h})")


def _fill_box(p0, p1, h: int, w: int) -> np.ndarray:
    x1, x2 = sorted((p0[0], p1[0]))
    y1, y2 = sorted((p0[1], p1[1]))
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[int(round(y1)) : int(round(y2)) + 1, int(round(x1)) : int(round(x2)) + 1] = 1
    return mask


def _fill_circle(center, rim, h: int, w: int) -> np.ndarray:
    cx, cy = center
    radius = float(np.hypot(rim[0] - cx, rim[1] - cy))
    ys, xs = np.mgrid[0:h, 0:w]
    return ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2).astype(np.uint8)


def _fill_polygon(points, h: int, w: int) -> np.ndarray:
    # even-odd scanline over pixel centers
    mask = np.zeros((h, w), dtype=np.uint8)
    n = len(points)
    if n < 3:
        return mask
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    for row in range(h):
        py = row + 0.0
        crossings = []
        for i in range(n):
            x1, y1 = xs[i], ys[i]
            x2, y2 = xs[(i + 1) % n], ys[(i + 1) % n]
            if (y1 <= py < y2) or (y2 <= py < y1):
                crossings.append(x1 + (py - y1) / (y2 - y1) * (x2 - x1))
        crossings.sort()
        for k in range(0, len(crossings) - 1, 2):
            lo = int(np.ceil(crossings[k]))
            hi = int(np.floor(crossings[k + 1]))
            if hi >= lo:
                mask[row, max(lo, 0) : min(hi, w - 1) + 1] = 1
    return mask


def rasterize(geometry: AnnotationGeometry, h: int, w: int) -> np.ndarray:
    """Fill the interior of a geometry on an h x w grid.

    Box corners are inclusive; a circle covers pixels whose center satisfies
    (x-cx)^2 + (y-cy)^2 <= r^2; raster payloads pass through unchanged.
    """
    if geometry.kind == "raster":
        raster = geometry.raster
        if raster.shape != (h, w):
            raise GeometryError(f"raster payload shape {raster.shape} != ({h}, {w})")
        return raster.copy()
    if geometry.kind == "polygon" and len(geometry.coordinates) == 0:
        return np.zeros((h, w), dtype=np.uint8)
    _check_bounds(geometry.coordinates, h, w)
    if geometry.kind == "box":
        return _fill_box(geometry.coordinates[0], geometry.coordinates[1], h, w)
    if geometry.kind == "circle":
        return _fill_circle(geometry.coordinates[0], geometry.coordinates[1], h, w)
    return _fill_polygon(geometry.coordinates, h, w)
