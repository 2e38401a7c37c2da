"""Geometric primitives shared by rewards, dataset conversion, and metrics.

Coordinates are continuous pixels with the origin at the top-left corner,
x increasing rightward and y increasing downward.  The cell at grid row r,
column c has its center at ``(c + 0.5, r + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class EmptyMaskError(ValueError):
    """Raised when an operation needs at least one foreground cell."""


class DimensionMismatchError(ValueError):
    """Raised when two grids that must share dimensions do not."""


@dataclass(frozen=True)
class PointXY:
    """A continuous pixel coordinate (x rightward, y downward)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def l1_distance(self, other: "PointXY") -> float:
        return abs(self.x - other.x) + abs(self.y - other.y)

    def l2_distance(self, other: "PointXY") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class BBox:
    """An axis-aligned box with strictly positive width and height."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"box must satisfy x1 < x2 and y1 < y2, got "
                f"({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> PointXY:
        return PointXY((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


class MaskGrid:
    """A binary occupancy grid (row-major, True = foreground).

    Instances are immutable: the backing array is marked read-only on
    construction so masks can be shared freely across threads.
    """

    __slots__ = ("cells",)

    def __init__(self, cells: np.ndarray) -> None:
        arr = np.asarray(cells, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be a 2-D grid, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("mask must have positive width and height")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "cells", arr)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("MaskGrid is immutable")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def foreground_count(self) -> int:
        return int(self.cells.sum())

    @property
    def is_empty(self) -> bool:
        return not self.cells.any()

    @classmethod
    def from_rows(cls, rows: list[str]) -> "MaskGrid":
        """Build a mask from strings of '0'/'1' characters, one per row."""
        if not rows:
            raise ValueError("mask must have at least one row")
        width = len(rows[0])
        grid = np.empty((len(rows), width), dtype=bool)
        for r, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"row {r} has length {len(row)}, expected {width}")
            if set(row) - {"0", "1"}:
                raise ValueError(f"row {r} contains characters other than '0'/'1'")
            grid[r] = [ch == "1" for ch in row]
        return cls(grid)

    def to_rows(self) -> list[str]:
        return ["".join("1" if v else "0" for v in row) for row in self.cells]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MaskGrid):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(
            np.array_equal(self.cells, other.cells)
        )

    def __repr__(self) -> str:
        return f"MaskGrid({self.width}x{self.height}, foreground={self.foreground_count})"


@dataclass(frozen=True)
class DistanceField:
    """Per-cell Euclidean distance from foreground cell centers to the
    nearest background cell center; background cells hold 0.

    The image exterior counts as background, so a mask filling the whole
    frame still has finite values.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def max_value(self) -> float:
        return float(self.values.max())


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def point_in_box(p: PointXY, b: BBox) -> bool:
    """Boundary-inclusive containment test."""
    return b.x1 <= p.x <= b.x2 and b.y1 <= p.y <= b.y2


def distance_transform(m: MaskGrid) -> DistanceField:
    """Exact Euclidean distance transform with the exterior as background.

    Padding the grid with a one-cell background ring before the transform
    realizes the exterior rule exactly: the nearest exterior cell center to
    any in-grid cell always lies in that ring.
    """
    padded = np.pad(m.cells, 1, mode="constant", constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    return DistanceField(dist[1:-1, 1:-1])


def mask_to_bbox(m: MaskGrid) -> BBox:
    """Tight box over the foreground.

    Pixel extremes (r_min, c_min, r_max, c_max) map to the continuous box
    (c_min, r_min, c_max + 1, r_max + 1), so a single-pixel mask yields a
    unit-area box.
    """
    if m.is_empty:
        raise EmptyMaskError("cannot compute a bounding box of an empty mask")
    rows = np.any(m.cells, axis=1)
    cols = np.any(m.cells, axis=0)
    r_min, r_max = np.flatnonzero(rows)[[0, -1]]
    c_min, c_max = np.flatnonzero(cols)[[0, -1]]
    return BBox(float(c_min), float(r_min), float(c_max) + 1.0, float(r_max) + 1.0)


def inscribed_center(m: MaskGrid) -> tuple[PointXY, float]:
    """Center and radius of the (grid-approximated) maximal inscribed circle.

    Returns the center of the foreground cell with the largest distance
    to the background, ties broken by smallest row then smallest column.
    """
    if m.is_empty:
        raise EmptyMaskError("cannot inscribe a circle in an empty mask")
    field = distance_transform(m).values
    # np.argmax scans in row-major order, implementing the tie-break.
    flat = int(np.argmax(field))
    r, c = divmod(flat, m.width)
    return PointXY(c + 0.5, r + 0.5), float(field[r, c])


def outer_ring_point(m: MaskGrid, p1: PointXY, radius: float) -> PointXY:
    """Farthest foreground cell center beyond ``radius`` from ``p1``.

    When no foreground cell lies strictly beyond the radius, falls back to
    the boundary cell (foreground 4-adjacent to background or to the image
    edge) farthest from ``p1``.  Ties broken row-major.
    """
    if m.is_empty:
        raise EmptyMaskError("cannot pick an outer-ring point of an empty mask")
    rr, cc = np.nonzero(m.cells)
    cx = cc + 0.5
    cy = rr + 0.5
    dist = np.hypot(cx - p1.x, cy - p1.y)

    beyond = dist > radius
    if beyond.any():
        candidates = np.flatnonzero(beyond)
    else:
        padded = np.pad(m.cells, 1, mode="constant", constant_values=False)
        interior = (
            padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
        )
        boundary = m.cells & ~interior
        candidates = np.flatnonzero(boundary[rr, cc])
    best = candidates[np.argmax(dist[candidates])]
    # np.nonzero lists cells row-major, and argmax keeps the first maximum,
    # so the row-major tie-break is preserved.
    return PointXY(float(cx[best]), float(cy[best]))


def mask_iou(a: MaskGrid, b: MaskGrid) -> float:
    """Cellwise IoU of two equally-sized masks; 1.0 when both are empty."""
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.count_nonzero(a.cells & b.cells))
    union = int(np.count_nonzero(a.cells | b.cells))
    if union == 0:
        return 1.0
    return inter / union
