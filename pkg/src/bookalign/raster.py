"""Label grids from polygon annotations.

Polygons are filled with the even-odd rule sampled at pixel centers, so an
axis-aligned rectangle with integer corners covers exactly its analytic area
in pixels at scale 1. Overlapping regions are resolved by drawing larger
regions first: the smallest region wins each pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotate import PageAnnotation
from .tei import CLASS_IDS, RegionType


@dataclass
class LabelGrid:
    labels: np.ndarray  # uint8 (height, width), 0 = background
    scale: int = 1

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def _grid_dim(size: float, scale: int) -> int:
    return int(-(-size // scale))


def fill_polygons(polygons, width, height, scale: int = 1) -> np.ndarray:
    """Boolean mask of the union of even-odd filled polygons.

    A grid pixel (px, py) samples the image point ((px+.5)*scale,
    (py+.5)*scale); it is inside when an odd number of polygon edges cross
    the horizontal ray strictly left of the sample point.
    """
    gw, gh = _grid_dim(width, scale), _grid_dim(height, scale)
    mask = np.zeros((gh, gw), dtype=bool)
    if gw == 0 or gh == 0:
        return mask
    for poly in polygons:
        pts = [(float(x), float(y)) for x, y in poly]
        if len(pts) < 3:
            continue
        diff = np.zeros((gh, gw + 1), dtype=np.int64)
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            if y0 == y1:
                continue
            ylo, yhi = (y0, y1) if y0 < y1 else (y1, y0)
            r0 = max(0, int(np.ceil(ylo / scale - 0.5)))
            r1 = min(gh - 1, int(np.ceil(yhi / scale - 0.5)) - 1)
            if r1 < r0:
                continue
            rows = np.arange(r0, r1 + 1)
            yc = (rows + 0.5) * scale
            xc = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
            cols = np.clip(np.floor(xc / scale - 0.5).astype(np.int64) + 1, 0, gw)
            np.add.at(diff, (rows, cols), 1)
        mask |= (np.cumsum(diff, axis=1)[:, :gw] % 2).astype(bool)
    return mask


def rasterize(annotation: PageAnnotation, scale: int = 1) -> LabelGrid:
    """Dense class-id grid for one page annotation.

    Regions are drawn in decreasing area order so that, where regions
    overlap, the smaller one keeps its pixels (page numbers over body, ...).
    Equal areas draw in input order, the later region winning.
    """
    if annotation.width <= 0 or annotation.height <= 0:
        raise ValueError(f"zero-area page {annotation.image!r}")
    gw = _grid_dim(annotation.width, scale)
    gh = _grid_dim(annotation.height, scale)
    labels = np.zeros((gh, gw), dtype=np.uint8)
    order = sorted(range(len(annotation.regions)),
                   key=lambda i: (-annotation.regions[i].area, i))
    for i in order:
        region = annotation.regions[i]
        m = fill_polygons([region.polygon], annotation.width,
                          annotation.height, scale)
        labels[m] = CLASS_IDS[region.region_type]
    return LabelGrid(labels, scale)


def type_masks(annotation: PageAnnotation, scale: int = 1
               ) -> dict[RegionType, np.ndarray]:
    """Per-type union masks, ignoring cross-type overlap resolution."""
    by_type: dict[RegionType, list] = {}
    for r in annotation.regions:
        by_type.setdefault(r.region_type, []).append(r.polygon)
    return {t: fill_polygons(polys, annotation.width, annotation.height, scale)
            for t, polys in by_type.items()}
