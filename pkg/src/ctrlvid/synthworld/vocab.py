"""Shared text vocabulary for captions and entity descriptions.

Layout: pad + template words, then color and shape words, then one
compound id per (color, shape) pair used as the entity description slot.
"""

from __future__ import annotations

from .palette import COLOR_NAMES
from .shapes import SHAPE_NAMES

PAD = 0

_TEMPLATE = ("<pad>", "a", "an", "and", "empty", "scene", "moving")

WORDS: tuple[str, ...] = (
    _TEMPLATE
    + COLOR_NAMES
    + SHAPE_NAMES
    + tuple(f"{c}-{s}" for c in COLOR_NAMES for s in SHAPE_NAMES)
)

VOCAB_SIZE = len(WORDS)

_WORD_ID = {w: i for i, w in enumerate(WORDS)}


def word_id(word: str) -> int:
    return _WORD_ID[word]


def description_id(color_name: str, shape_name: str) -> int:
    """The single-token id for an entity description like \"red-square\"."""
    return _WORD_ID[f"{color_name}-{shape_name}"]


def description_text(did: int) -> str:
    return WORDS[did].replace("-", " ")


def all_descriptions() -> list[dict]:
    """Every (color, shape) description with its id, for client pickers."""
    out = []
    for c in COLOR_NAMES:
        for s in SHAPE_NAMES:
            out.append({"id": description_id(c, s), "color": c, "shape": s, "text": f"{c} {s}"})
    return out
