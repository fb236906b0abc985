"""The 64-entry color palette and the eight named entity colors.

Named colors sit in distinct 4-index pools so that histogram features
pooled by groups of four never collide. Index 0 is the background.
"""

from __future__ import annotations

import colorsys

import numpy as np

K_PAL = 64

# name -> palette index; all land in different index-div-4 pools.
NAMED_COLORS: dict[str, int] = {
    "red": 4,
    "orange": 9,
    "yellow": 14,
    "green": 21,
    "cyan": 26,
    "blue": 35,
    "purple": 44,
    "pink": 57,
}

COLOR_NAMES = tuple(NAMED_COLORS)

_ANCHOR_RGB = {
    0: (16, 16, 16),
    4: (220, 40, 40),
    9: (240, 140, 30),
    14: (235, 220, 50),
    21: (60, 200, 70),
    26: (60, 210, 220),
    35: (50, 90, 230),
    44: (150, 60, 220),
    57: (240, 120, 190),
}


def _build_rgb() -> np.ndarray:
    rgb = np.zeros((K_PAL, 3), dtype=np.uint8)
    for i in range(K_PAL):
        if i in _ANCHOR_RGB:
            rgb[i] = _ANCHOR_RGB[i]
        else:
            r, g, b = colorsys.hsv_to_rgb(i / K_PAL, 0.55, 0.80)
            rgb[i] = (round(r * 255), round(g * 255), round(b * 255))
    return rgb


PALETTE_RGB = _build_rgb()


def color_index(name: str) -> int:
    return NAMED_COLORS[name]


def color_name(index: int) -> str:
    for name, i in NAMED_COLORS.items():
        if i == index:
            return name
    raise KeyError(f"palette index {index} has no name")
