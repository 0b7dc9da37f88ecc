"""Axis-aligned boxes and rectilinear polygon helpers.

Image coordinate convention throughout: x grows right, y grows down, boxes
are closed regions [x0,x1] x [y0,y1] in continuous coordinates. A box whose
corners are integers covers exactly (x1-x0)*(y1-y0) unit pixels whose centers
fall inside it.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate bbox corners: {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def union(self, other: "BBox") -> "BBox":
        return BBox(min(self.x0, other.x0), min(self.y0, other.y0),
                    max(self.x1, other.x1), max(self.y1, other.y1))

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def iou(self, other: "BBox") -> float:
        inter = self.intersection_area(other)
        if inter == 0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def overlaps(self, other: "BBox") -> bool:
        """Positive-area intersection (edge/corner contact does not count)."""
        return self.intersection_area(other) > 0

    def contains(self, other: "BBox") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and self.x1 >= other.x1 and self.y1 >= other.y1)

    def clamped(self, width: float, height: float) -> "BBox":
        return BBox(min(max(self.x0, 0), width), min(max(self.y0, 0), height),
                    min(max(self.x1, 0), width), min(max(self.y1, 0), height))

    def as_polygon(self) -> list[tuple[float, float]]:
        return [(self.x0, self.y0), (self.x1, self.y0),
                (self.x1, self.y1), (self.x0, self.y1)]

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, vals) -> "BBox":
        x0, y0, x1, y1 = vals
        return cls(x0, y0, x1, y1)

    @classmethod
    def hull(cls, boxes) -> "BBox":
        boxes = list(boxes)
        if not boxes:
            raise ValueError("hull of no boxes")
        return cls(min(b.x0 for b in boxes), min(b.y0 for b in boxes),
                   max(b.x1 for b in boxes), max(b.y1 for b in boxes))


def polygon_area(points) -> float:
    """Absolute shoelace area of a closed ring (last->first edge implied)."""
    pts = list(points)
    if len(pts) < 3:
        return 0.0
    s = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


def polygon_hull(points) -> BBox:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return BBox(min(xs), min(ys), max(xs), max(ys))


def _signed_area(points) -> float:
    s = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:] + points[:1]):
        s += x0 * y1 - x1 * y0
    return s / 2.0


def _simplify_ring(ring):
    """Drop collinear intermediate vertices of a rectilinear ring."""
    out = []
    n = len(ring)
    for i in range(n):
        px, py = ring[i - 1]
        cx, cy = ring[i]
        nx, ny = ring[(i + 1) % n]
        if (px == cx == nx) or (py == cy == ny):
            continue
        out.append(ring[i])
    return out


def _canonical_ring(ring):
    """Rotate so the lexicographically smallest vertex comes first."""
    k = min(range(len(ring)), key=lambda i: ring[i])
    return ring[k:] + ring[:k]


def rect_union_rings(boxes) -> list[list[tuple[float, float]]]:
    """Outer boundary rings of the union of axis-aligned boxes.

    Coordinate-compressed occupancy grid + directed boundary-edge walk.
    Holes in the union are filled (only positively oriented rings are kept).
    Rings are returned largest-area first, each starting at its smallest
    vertex, traversed with the interior on the right in image coordinates.
    """
    boxes = [b for b in boxes if b.area > 0]
    if not boxes:
        return []
    xs = sorted({v for b in boxes for v in (b.x0, b.x1)})
    ys = sorted({v for b in boxes for v in (b.y0, b.y1)})
    nx, ny = len(xs) - 1, len(ys) - 1
    grid = np.zeros((ny, nx), dtype=bool)
    for b in boxes:
        i0 = bisect_left(xs, b.x0)
        i1 = bisect_left(xs, b.x1)
        j0 = bisect_left(ys, b.y0)
        j1 = bisect_left(ys, b.y1)
        grid[j0:j1, i0:i1] = True

    # Directed boundary edges, interior kept on the right of travel:
    # exposed top edge runs east, right edge south, bottom west, left north.
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b_):
        edges.setdefault(a, []).append(b_)

    for j in range(ny):
        for i in range(nx):
            if not grid[j, i]:
                continue
            if j == 0 or not grid[j - 1, i]:
                add((i, j), (i + 1, j))
            if i == nx - 1 or not grid[j, i + 1]:
                add((i + 1, j), (i + 1, j + 1))
            if j == ny - 1 or not grid[j + 1, i]:
                add((i + 1, j + 1), (i, j + 1))
            if i == 0 or not grid[j, i - 1]:
                add((i, j + 1), (i, j))

    # Prefer the sharpest right turn at junction vertices so loops touching
    # at a corner split into two simple rings instead of crossing.
    def pick(prev, cur, options):
        if len(options) == 1:
            return options[0]
        dx, dy = cur[0] - prev[0], cur[1] - prev[1]
        # right turn first, then straight, then left turn
        prefer = [(-dy, dx), (dx, dy), (dy, -dx)]
        for d in prefer:
            want = (cur[0] + d[0], cur[1] + d[1])
            if want in options:
                return want
        return options[0]

    rings = []
    while edges:
        start = min(edges)
        cur = start
        nxt = edges[start][0]
        ring = [cur]
        prev = cur
        cur = nxt
        _consume(edges, prev, cur)
        while cur != start:
            ring.append(cur)
            options = edges.get(cur, [])
            nxt = pick(prev, cur, options)
            _consume(edges, cur, nxt)
            prev, cur = cur, nxt
        ring = _simplify_ring(ring)
        if len(ring) >= 4 and _signed_area(ring) > 0:
            rings.append(_canonical_ring([(xs[i], ys[j]) for i, j in ring]))
    rings.sort(key=polygon_area, reverse=True)
    return rings


def _consume(edges, a, b):
    opts = edges[a]
    opts.remove(b)
    if not opts:
        del edges[a]
