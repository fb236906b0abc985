"""Shape templates on the cell grid and box-to-cell rounding.

Every template is a boolean [h, w] mask. The three shapes stay pairwise
distinct at every allowed size (3 or 4 cells per side), which is what the
exact template-matching detector relies on.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

MIN_SIZE = 3
MAX_SIZE = 4


class Shape(str, Enum):
    SQUARE = "square"
    CIRCLE = "circle"
    TRIANGLE = "triangle"


SHAPE_NAMES = tuple(s.value for s in Shape)


@lru_cache(maxsize=None)
def shape_mask(shape: Shape, w: int, h: int) -> np.ndarray:
    """Boolean [h, w] template; cached, so treat the result as read-only."""
    if shape is Shape.SQUARE:
        return np.ones((h, w), dtype=bool)
    if shape is Shape.CIRCLE:
        # Cell centers inside the inscribed ellipse, slightly shrunk so
        # corners drop out at every allowed size.
        u = (2.0 * np.arange(w) + 1.0) / w - 1.0
        v = (2.0 * np.arange(h) + 1.0) / h - 1.0
        return (u[None, :] ** 2 + v[:, None] ** 2) <= 0.85
    if shape is Shape.TRIANGLE:
        mask = np.zeros((h, w), dtype=bool)
        for j in range(h):
            k = -(-w * (j + 1) // h)  # ceil(w*(j+1)/h), widening toward the base
            start = (w - k) // 2
            mask[j, start : start + k] = True
        return mask
    raise ValueError(f"unknown shape {shape!r}")


def cell_span(v1: float, v2: float, dim: int) -> tuple[int, int]:
    """Half-up rounding of a normalized interval to cell indices [c1, c2).

    Rounding both ends the same way keeps the span width constant while a
    fixed-size box slides linearly across the grid.
    """
    c1 = int(np.floor(v1 * dim + 0.5))
    c2 = int(np.floor(v2 * dim + 0.5))
    return max(c1, 0), min(c2, dim)


def box_to_cells(box, h: int, w: int) -> tuple[int, int, int, int]:
    """Normalized (x1, y1, x2, y2) -> cell rect (r1, c1, r2, c2), half-open."""
    x1, y1, x2, y2 = box
    c1, c2 = cell_span(x1, x2, w)
    r1, r2 = cell_span(y1, y2, h)
    return r1, c1, r2, c2


def cells_to_box(r1: int, c1: int, r2: int, c2: int, h: int, w: int) -> tuple[float, float, float, float]:
    return c1 / w, r1 / h, c2 / w, r2 / h


def box_iou(a, b) -> float:
    """IoU of two normalized (x1, y1, x2, y2) boxes."""
    ix1 = max(a[0], b[0])
    iy1 = max(a[1], b[1])
    ix2 = min(a[2], b[2])
    iy2 = min(a[3], b[3])
    iw = max(ix2 - ix1, 0.0)
    ih = max(iy2 - iy1, 0.0)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)
