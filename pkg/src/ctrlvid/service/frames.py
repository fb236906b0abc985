"""Palette frames rendered to PNG for browsers and the CLI image strip."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from ..errors import ValidationError
from ..synthworld.palette import PALETTE_RGB
from ..tokenizer import VideoClip

DEFAULT_SCALE = 16  # pixels per grid cell


def frame_rgb(frame: np.ndarray, scale: int = DEFAULT_SCALE) -> np.ndarray:
    """[H, W] palette cells -> [H*scale, W*scale, 3] uint8 pixels."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValidationError(f"frame must be 2d, got shape {frame.shape}")
    if scale < 1:
        raise ValidationError(f"pixel scale must be >= 1, got {scale}")
    rgb = PALETTE_RGB[frame]
    return np.kron(rgb, np.ones((scale, scale, 1), dtype=np.uint8))


def frame_png(frame: np.ndarray, scale: int = DEFAULT_SCALE) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame_rgb(frame, scale)).save(buf, format="PNG")
    return buf.getvalue()


def strip_png(clip: VideoClip, scale: int = DEFAULT_SCALE, gap: int = 2) -> bytes:
    """All frames side by side with a white gap, one PNG."""
    tiles = [frame_rgb(f, scale) for f in clip.frames]
    h = tiles[0].shape[0]
    spacer = np.full((h, gap, 3), 255, dtype=np.uint8)
    row = []
    for i, tile in enumerate(tiles):
        if i:
            row.append(spacer)
        row.append(tile)
    buf = io.BytesIO()
    Image.fromarray(np.concatenate(row, axis=1)).save(buf, format="PNG")
    return buf.getvalue()
