"""Palette-grid video clips and their discrete token representation.

Frames are small H×W grids of palette indices. A clip with an odd frame
count F compresses to T = 1 + (F-1)/2 token timesteps: timestep 0 keeps
frame 0, timestep i keeps frame 2i-1 (the first frame of the pair
{2i-1, 2i}). Token values are the palette indices themselves, so encode
and decode are exact inverses on pair-constant clips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

DESK_F = 11
DESK_H = 8
DESK_W = 8
DESK_K_PAL = 64

_CLIP_MAGIC = b"FCLP"
_CLIP_VERSION = 1

# A Frame is a 2d uint8 array of palette indices; index 0 is background.
Frame = np.ndarray


def _check_grid(arr: np.ndarray, k_pal: int, what: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"{what} must hold integer palette indices")
    if arr.size and (arr.min() < 0 or arr.max() >= k_pal):
        raise ValidationError(f"{what} has palette indices outside [0, {k_pal})")
    return arr.astype(np.uint8, copy=False)


@dataclass
class VideoClip:
    """An [F, H, W] stack of palette frames plus a nominal frame-rate label."""

    frames: np.ndarray
    k_pal: int = DESK_K_PAL
    fps_label: float = 8.0

    def __post_init__(self):
        self.frames = _check_grid(self.frames, self.k_pal, "clip")
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValidationError(f"clip needs shape [F, H, W] with F >= 1, got {self.frames.shape}")

    @property
    def f(self) -> int:
        return self.frames.shape[0]

    @property
    def h(self) -> int:
        return self.frames.shape[1]

    @property
    def w(self) -> int:
        return self.frames.shape[2]

    def frame(self, i: int) -> Frame:
        return self.frames[i]


@dataclass
class TokenGrid:
    """A [T, H, W] array of discrete video tokens with vocabulary k_vocab."""

    tokens: np.ndarray
    k_vocab: int = DESK_K_PAL

    def __post_init__(self):
        arr = np.asarray(self.tokens)
        if arr.ndim != 3:
            raise ValidationError(f"token grid needs shape [T, H, W], got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError("token grid must hold integers")
        if arr.size and (arr.min() < 0 or arr.max() >= self.k_vocab):
            raise ValidationError(f"token values outside [0, {self.k_vocab})")
        self.tokens = arr.astype(np.int64, copy=False)

    @property
    def t(self) -> int:
        return self.tokens.shape[0]

    @property
    def h(self) -> int:
        return self.tokens.shape[1]

    @property
    def w(self) -> int:
        return self.tokens.shape[2]


def timesteps_for_frames(f: int) -> int:
    """1 + (F-1)/2 token timesteps for an odd F-frame clip (11 -> 6)."""
    if f < 1 or f % 2 == 0:
        raise ValidationError(f"clip length must be odd and positive, got {f}")
    return 1 + (f - 1) // 2


def frame_index_for_timestep(i: int) -> int:
    """The representative source frame of token timestep i (0, 1, 3, 5, ...)."""
    return 0 if i == 0 else 2 * i - 1


def encode_video(clip: VideoClip) -> TokenGrid:
    """Compress frame pairs: token timestep i takes frame 0 if i == 0 else 2i-1."""
    t = timesteps_for_frames(clip.f)
    reps = np.array([frame_index_for_timestep(i) for i in range(t)])
    return TokenGrid(clip.frames[reps].astype(np.int64), k_vocab=clip.k_pal)


def decode_tokens(g: TokenGrid, fps_label: float = 8.0) -> VideoClip:
    """Expand back to 2(T-1)+1 frames; each timestep past 0 emits two copies."""
    parts = [g.tokens[0:1]]
    for i in range(1, g.t):
        parts.append(np.repeat(g.tokens[i : i + 1], 2, axis=0))
    frames = np.concatenate(parts, axis=0) if g.t > 1 else g.tokens[0:1]
    return VideoClip(frames.astype(np.uint8), k_pal=g.k_vocab, fps_label=fps_label)


def flatten(g: TokenGrid) -> np.ndarray:
    """Row-major [T*H*W] token sequence (t outermost, then h, then w)."""
    return g.tokens.reshape(-1).copy()


def unflatten(seq: np.ndarray, t: int, h: int, w: int, k_vocab: int = DESK_K_PAL) -> TokenGrid:
    seq = np.asarray(seq)
    if seq.size != t * h * w:
        raise FormatError(f"sequence length {seq.size} does not fill a {t}x{h}x{w} grid")
    return TokenGrid(seq.reshape(t, h, w), k_vocab=k_vocab)


def position_of(t: int, h: int, w: int, grid_h: int, grid_w: int) -> int:
    """Flat index of token (t, h, w) in the row-major sequence."""
    return (t * grid_h + h) * grid_w + w


def save_clip(path, clip: VideoClip) -> None:
    header = struct.pack("<4sHHHHH", _CLIP_MAGIC, _CLIP_VERSION, clip.f, clip.h, clip.w, clip.k_pal)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(clip.frames.astype(np.uint8).tobytes())


def load_clip(path) -> VideoClip:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = struct.calcsize("<4sHHHHH")
    if len(blob) < head:
        raise FormatError("clip file truncated before header")
    magic, version, f, h, w, k_pal = struct.unpack_from("<4sHHHHH", blob)
    if magic != _CLIP_MAGIC:
        raise FormatError(f"bad clip magic {magic!r}")
    if version != _CLIP_VERSION:
        raise FormatError(f"unsupported clip version {version}")
    body = blob[head:]
    if len(body) != f * h * w:
        raise FormatError(f"clip body holds {len(body)} bytes, expected {f * h * w}")
    frames = np.frombuffer(body, dtype=np.uint8).reshape(f, h, w)
    if frames.size and frames.max() >= k_pal:
        raise FormatError(f"clip body has palette indices outside [0, {k_pal})")
    return VideoClip(frames.copy(), k_pal=k_pal)
