"""Region geometries and annotation files.

Line-based regions get the boundary of the union of their line boxes, merged
in reading order: a vertical gap between consecutive lines is bridged by
extending the earlier box to the top of the next, so a paragraph's inter-line
leading belongs to the region. Figures come from an external detector's
candidate boxes via greedy selection against the ground-truth figure count.

Annotation JSON schema (one file per page, stable field order):

    {"image": "p0001.png", "width": 900, "height": 1200,
     "regions": [{"type": "body", "polygon": [[x, y], ...],
                  "source": "aligned", "checked": false}]}

Optional per-region fields: "score" (detector confidence), "run_on".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .geometry import BBox, polygon_area, polygon_hull, rect_union_rings
from .tei import RegionType

log = logging.getLogger(__name__)

SOURCES = ("aligned", "detector", "manual")


@dataclass
class RegionGeometry:
    region_type: RegionType
    polygon: list[tuple[float, float]]
    source: str = "aligned"
    checked: bool = False
    score: Optional[float] = None

    @property
    def bbox(self) -> BBox:
        return polygon_hull(self.polygon)

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    def to_json(self) -> dict:
        d = {"type": self.region_type.value,
             "polygon": [[x, y] for x, y in self.polygon],
             "source": self.source,
             "checked": self.checked}
        if self.score is not None:
            d["score"] = self.score
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RegionGeometry":
        return cls(RegionType(d["type"]),
                   [tuple(p) for p in d["polygon"]],
                   d.get("source", "aligned"),
                   d.get("checked", False),
                   d.get("score"))


@dataclass
class PageAnnotation:
    image: str
    width: int
    height: int
    regions: list[RegionGeometry] = field(default_factory=list)

    def types_present(self) -> set[RegionType]:
        return {r.region_type for r in self.regions}

    def to_json(self) -> dict:
        return {"image": self.image, "width": self.width, "height": self.height,
                "regions": [r.to_json() for r in self.regions]}

    @classmethod
    def from_json(cls, d: dict) -> "PageAnnotation":
        return cls(d["image"], d["width"], d["height"],
                   [RegionGeometry.from_json(r) for r in d.get("regions", [])])


@dataclass(frozen=True)
class DetectionCandidate:
    bbox: BBox
    score: float
    class_label: str = "figure"


# ---------------------------------------------------------------------------
# geometry from aligned lines


def _bridged_boxes(boxes: Sequence[BBox]) -> list[BBox]:
    """Extend each box to meet the next in reading order when a plausible
    inter-line gap separates them (horizontal overlap, gap at most one line
    height). Larger jumps stay disconnected."""
    out = [BBox(b.x0, b.y0, b.x1, b.y1) for b in boxes]
    for i in range(len(out) - 1):
        a, b = out[i], out[i + 1]
        if min(a.x1, b.x1) <= max(a.x0, b.x0):
            continue
        limit = max(a.height, b.height)
        if a.y1 < b.y0 <= a.y1 + limit:
            out[i] = BBox(a.x0, a.y0, a.x1, b.y0)
        elif b.y1 < a.y0 <= b.y1 + limit:
            out[i] = BBox(a.x0, b.y1, a.x1, a.y1)
    return out


def region_components_from_lines(lines, mode: str = "poly"
                                 ) -> list[list[tuple[float, float]]]:
    """Boundary rings for the union of the given lines' boxes (see
    region_bounds_from_lines); one ring per connected component,
    largest first."""
    boxes = [l.bbox if hasattr(l, "bbox") else l for l in lines]
    boxes = [b for b in boxes if b.area > 0]
    if not boxes:
        return []
    if mode == "rect":
        return [BBox.hull(boxes).as_polygon()]
    return rect_union_rings(_bridged_boxes(boxes))


def region_bounds_from_lines(lines, region_type: RegionType,
                             mode: str = "poly") -> Optional[RegionGeometry]:
    """Region geometry from its assigned OCR lines, in reading order.

    ``poly`` mode returns the rectilinear union boundary; ``rect`` returns
    the bounding rectangle as the polygon. An empty line list yields None
    (region unlocated). A disconnected union yields the largest component
    (the annotation pipeline keeps the rest as extra same-type geometries).
    """
    rings = region_components_from_lines(lines, mode)
    if not rings:
        return None
    if len(rings) > 1:
        log.warning("region %s has %d disconnected components",
                    region_type.value, len(rings))
    return RegionGeometry(region_type, rings[0], source="aligned")


# ---------------------------------------------------------------------------
# figure selection


def greedy_figure_select(candidates: Sequence[DetectionCandidate], k: int,
                         overlap_iou: Optional[float] = None) -> list[BBox]:
    """Pick up to ``k`` boxes in descending score, skipping candidates that
    overlap an already-accepted box.

    Overlap means any positive intersection area; ``overlap_iou`` switches to
    an IoU-above-threshold test instead. Score ties prefer the larger box,
    then top-left position. Fewer than k accepted means the page is
    under-detected (caller checks the length).
    """
    if k < 1:
        raise ValueError("true figure count k must be >= 1")
    ranked = sorted(candidates,
                    key=lambda c: (-c.score, -c.bbox.area, c.bbox.y0, c.bbox.x0))
    chosen: list[BBox] = []
    for cand in ranked:
        if len(chosen) >= k:
            break
        if overlap_iou is None:
            clash = any(cand.bbox.overlaps(b) for b in chosen)
        else:
            clash = any(cand.bbox.iou(b) > overlap_iou for b in chosen)
        if not clash:
            chosen.append(cand.bbox)
    return chosen


# ---------------------------------------------------------------------------
# annotation files


def _clamp_polygon(poly, width, height, warnings: list[str]) -> list:
    out = []
    clamped = False
    for x, y in poly:
        cx = min(max(x, 0), width)
        cy = min(max(y, 0), height)
        if (cx, cy) != (x, y):
            clamped = True
        out.append((cx, cy))
    if clamped:
        warnings.append(f"polygon clamped to page bounds {width}x{height}")
    return out


def annotation_to_json(ann: PageAnnotation, warnings: list[str] | None = None) -> dict:
    """Serializable form with geometry clamped to the page (vertices exactly
    on the width/height boundary are kept)."""
    if warnings is None:
        warnings = []
    d = ann.to_json()
    for r in d["regions"]:
        poly = _clamp_polygon([tuple(p) for p in r["polygon"]],
                              ann.width, ann.height, warnings)
        r["polygon"] = [[x, y] for x, y in poly]
    return d


def save_annotation(ann: PageAnnotation, path, warnings: list[str] | None = None):
    d = annotation_to_json(ann, warnings)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_annotation(path) -> PageAnnotation:
    with open(path, "r", encoding="utf-8") as fh:
        return PageAnnotation.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# the per-page annotation pipeline


def build_page_annotation(page_regions, line_assignments, ocr_page,
                          detections: Sequence[DetectionCandidate] = (),
                          mode: str = "poly",
                          overlap_iou: Optional[float] = None
                          ) -> tuple[PageAnnotation, list[dict]]:
    """Turn line-to-region assignments into a PageAnnotation.

    page_regions: list of (region_index, RegionType) in page order;
    line_assignments: region index or None per OCR line. Figure regions are
    located from detector candidates (k = number of figure regions on the
    page). Returns the annotation plus a report of unlocated/under-detected
    regions.
    """
    ann = PageAnnotation(ocr_page.image, ocr_page.width, ocr_page.height)
    report: list[dict] = []
    by_region: dict[int, list] = {}
    for line, ridx in zip(ocr_page.lines, line_assignments):
        if ridx is not None:
            by_region.setdefault(ridx, []).append(line)

    figure_indices = [i for i, t in page_regions if t is RegionType.FIGURE]
    for ridx, rtype in page_regions:
        if rtype is RegionType.FIGURE:
            continue
        lines = by_region.get(ridx, [])
        rings = region_components_from_lines(lines, mode)
        if not rings:
            report.append({"region": ridx, "type": rtype.value,
                           "status": "unlocated"})
            continue
        for ring in rings:
            ann.regions.append(RegionGeometry(rtype, ring, source="aligned"))

    if figure_indices:
        k = len(figure_indices)
        boxes = greedy_figure_select(detections, k, overlap_iou) if detections else []
        for b in boxes:
            ann.regions.append(RegionGeometry(RegionType.FIGURE, b.as_polygon(),
                                              source="detector"))
        if len(boxes) < k:
            report.append({"type": "figure", "status": "under-detected",
                           "expected": k, "found": len(boxes)})
    return ann, report
