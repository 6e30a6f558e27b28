"""Axis-aligned box arithmetic shared by every other module.

Coordinate convention: origin top-left, x right, y down. Boxes are
half-open, [x, x+w) x [y, y+h), in pixel units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Real-valued box; w and h must be positive and finite."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box {vals}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Region:
    """Integer box; always ends up fully inside its frame after clipping."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"empty region {(self.x, self.y, self.w, self.h)}")

    def as_bbox(self) -> BBox:
        return BBox(float(self.x), float(self.y), float(self.w), float(self.h))


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _clip_axis(ideal_lo: int, side: int, limit: int) -> tuple[int, int]:
    # Shift the interval into [0, limit); shrink only if it cannot fit.
    if side >= limit:
        return 0, limit
    return min(max(ideal_lo, 0), limit - side), side


def search_region_for(target: BBox, frame_w: int, frame_h: int,
                      scale: float) -> Region:
    """Square search region of side scale * max(w, h) centred on the target.

    When the ideal square crosses a frame edge it is shifted back inside
    (preserving its side) and only shrunk if the frame itself is smaller.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    side = max(1, round(scale * max(target.w, target.h)))
    x, w = _clip_axis(round(target.cx - side / 2.0), side, frame_w)
    y, h = _clip_axis(round(target.cy - side / 2.0), side, frame_h)
    return Region(x, y, w, h)
