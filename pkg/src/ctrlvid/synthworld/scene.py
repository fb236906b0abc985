"""Scene scripts: colored shapes on linear paths, rendered to palette clips.

A script fixes everything about a scene — entities, their start/end boxes
across a long span (default 40 frames), and which 11-frame window is the
training span. Rendering, annotation, captioning, and reference-crop
sampling are all derived deterministically from the script (crop frame
choice and slot shuffling draw from a caller-provided stream).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GenerationError, ValidationError
from ..tokenizer import VideoClip, frame_index_for_timestep, timesteps_for_frames
from .palette import COLOR_NAMES, NAMED_COLORS, color_name
from .shapes import MAX_SIZE, MIN_SIZE, Shape, box_iou, box_to_cells, shape_mask
from . import vocab


@dataclass(frozen=True)
class WorldConfig:
    h: int = 8
    w: int = 8
    k_pal: int = 64
    f_long: int = 40
    f_train: int = 11
    n_max: int = 4
    count_weights: tuple[float, ...] = (0.05, 0.25, 0.30, 0.25, 0.15)
    min_size: int = MIN_SIZE
    max_size: int = MAX_SIZE
    max_pair_iou: float = 0.5     # mean train-span IoU allowed between scripted entities
    overlap_drop_iou: float = 0.7 # annotation pipeline drops smaller trajectories past this
    max_tries: int = 100
    image_fraction: float = 0.2
    prompt_len: int = 16
    box_bins: int = 100

    def __post_init__(self):
        if len(self.count_weights) != self.n_max + 1:
            raise ValidationError("count_weights must cover 0..n_max entities")
        if self.f_train > self.f_long:
            raise ValidationError("train span exceeds long span")


@dataclass(frozen=True)
class EntitySpec:
    shape: Shape
    color: int          # palette index, never background
    size: tuple[int, int]  # (width, height) in cells


@dataclass(frozen=True)
class PlacedEntity:
    spec: EntitySpec
    start_box: tuple[float, float, float, float]
    end_box: tuple[float, float, float, float]


@dataclass(frozen=True)
class SceneScript:
    entities: tuple[PlacedEntity, ...]
    seed: tuple[int, ...]
    f_long: int
    f_train: int
    train_offset: int
    h: int
    w: int
    k_pal: int


@dataclass(frozen=True)
class TrajectoryAnnotation:
    entity_index: int
    coverage: int                 # visible cells across the train span
    boxes: np.ndarray = field(compare=False)  # [T, 4] normalized, exact


def box_at_frame(e: PlacedEntity, f: int, f_long: int) -> tuple[float, float, float, float]:
    """Linear interpolation between start and end boxes across the long span."""
    a = 0.0 if f_long <= 1 else f / (f_long - 1)
    return tuple((1.0 - a) * s + a * t for s, t in zip(e.start_box, e.end_box))


def _cell_box(row: int, col: int, wd: int, ht: int, h: int, w: int):
    return (col / w, row / h, (col + wd) / w, (row + ht) / h)


def _train_control_frames(script: SceneScript) -> list[int]:
    if script.f_train == 1:
        return [script.train_offset]
    t = timesteps_for_frames(script.f_train)
    return [script.train_offset + frame_index_for_timestep(i) for i in range(t)]


def _mean_iou(a: PlacedEntity, b: PlacedEntity, frames: list[int], f_long: int) -> float:
    vals = [box_iou(box_at_frame(a, f, f_long), box_at_frame(b, f, f_long)) for f in frames]
    return float(np.mean(vals))


def generate_scene(seed, config: WorldConfig, static: bool = False) -> SceneScript:
    """Sample a scene deterministically from `seed`.

    Entities get distinct colors and are re-placed (up to max_tries) until
    every pair's mean train-span IoU stays at or below max_pair_iou, so the
    scripted trajectories are unambiguous for the detector. `static` builds
    a single-frame scene (start == end, long span collapsed).
    """
    seed_tuple = tuple(int(s) for s in np.atleast_1d(np.asarray(seed, dtype=np.int64)))
    rng = np.random.default_rng(seed_tuple)
    f_long = 1 if static else config.f_long
    f_train = 1 if static else config.f_train
    offset = 0 if static else int(rng.integers(0, config.f_long - config.f_train + 1))

    n = int(rng.choice(config.n_max + 1, p=np.asarray(config.count_weights) / sum(config.count_weights)))
    colors = [NAMED_COLORS[COLOR_NAMES[i]] for i in rng.choice(len(COLOR_NAMES), size=n, replace=False)]

    probe = SceneScript((), seed_tuple, f_long, f_train, offset, config.h, config.w, config.k_pal)
    control_frames = _train_control_frames(probe)

    placed: list[PlacedEntity] = []
    for i in range(n):
        shape = Shape(rng.choice([s.value for s in Shape]))
        wd = int(rng.integers(config.min_size, config.max_size + 1))
        ht = int(rng.integers(config.min_size, config.max_size + 1))
        spec = EntitySpec(shape, colors[i], (wd, ht))
        for attempt in range(config.max_tries):
            r0 = int(rng.integers(0, config.h - ht + 1))
            c0 = int(rng.integers(0, config.w - wd + 1))
            if static:
                r1, c1 = r0, c0
            else:
                r1 = int(rng.integers(0, config.h - ht + 1))
                c1 = int(rng.integers(0, config.w - wd + 1))
                if (r1, c1) == (r0, c0):
                    continue
            cand = PlacedEntity(
                spec,
                _cell_box(r0, c0, wd, ht, config.h, config.w),
                _cell_box(r1, c1, wd, ht, config.h, config.w),
            )
            if all(_mean_iou(cand, p, control_frames, f_long) <= config.max_pair_iou for p in placed):
                placed.append(cand)
                break
        else:
            raise GenerationError(f"could not place entity {i} after {config.max_tries} tries")

    return SceneScript(tuple(placed), seed_tuple, f_long, f_train, offset, config.h, config.w, config.k_pal)


def render_with_owner(script: SceneScript) -> tuple[np.ndarray, np.ndarray]:
    """Render the long span -> (frames [F,H,W] uint8, owner [F,H,W] int8).

    Later-listed entities draw over earlier ones; owner holds the index of
    the entity visible at each cell, -1 for background.
    """
    frames = np.zeros((script.f_long, script.h, script.w), dtype=np.uint8)
    owner = np.full((script.f_long, script.h, script.w), -1, dtype=np.int8)
    for f in range(script.f_long):
        for i, e in enumerate(script.entities):
            r1, c1, r2, c2 = box_to_cells(box_at_frame(e, f, script.f_long), script.h, script.w)
            mask = shape_mask(e.spec.shape, c2 - c1, r2 - r1)
            frames[f, r1:r2, c1:c2][mask] = e.spec.color
            owner[f, r1:r2, c1:c2][mask] = i
    return frames, owner


def render_frames(script: SceneScript) -> VideoClip:
    frames, _ = render_with_owner(script)
    return VideoClip(frames, k_pal=script.k_pal)


def train_slice(script: SceneScript) -> slice:
    return slice(script.train_offset, script.train_offset + script.f_train)


def extract_annotations(script: SceneScript, owner: np.ndarray | None = None,
                        drop_iou: float = 0.7, n_max: int = 4) -> list[TrajectoryAnnotation]:
    """Emulate the detector+tracker pipeline, exactly.

    Boxes are the analytic interpolated boxes at the train-span control
    frames. Trajectories sort by descending visible-cell coverage; a
    trajectory whose mean IoU with an already-kept larger one exceeds
    drop_iou is removed; at most n_max survive.
    """
    if owner is None:
        _, owner = render_with_owner(script)
    window = owner[train_slice(script)]
    control_frames = _train_control_frames(script)

    ranked = []
    for i, e in enumerate(script.entities):
        coverage = int((window == i).sum())
        if coverage == 0:
            continue  # never visible in the train span: the detector sees nothing
        boxes = np.array([box_at_frame(e, f, script.f_long) for f in control_frames])
        ranked.append(TrajectoryAnnotation(i, coverage, boxes))
    ranked.sort(key=lambda a: (-a.coverage, a.entity_index))

    kept: list[TrajectoryAnnotation] = []
    for ann in ranked:
        ious = [float(np.mean([box_iou(a, b) for a, b in zip(ann.boxes, big.boxes)])) for big in kept]
        if any(v > drop_iou for v in ious):
            continue
        kept.append(ann)
        if len(kept) == n_max:
            break
    return kept


def sample_reference_crop(script: SceneScript, frames: np.ndarray, owner: np.ndarray,
                          entity_index: int, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Crop the entity's box from a random long-span frame outside the train span.

    Falls back (flagged) to an in-span frame when no outside frame shows the
    entity — single-frame scenes always take the fallback path.
    """
    visible = (owner == entity_index).any(axis=(1, 2))
    span = train_slice(script)
    outside = [f for f in range(script.f_long) if visible[f] and not (span.start <= f < span.stop)]
    fallback = not outside
    pool = outside if outside else [f for f in range(script.f_long) if visible[f]]
    if not pool:
        raise GenerationError(f"entity {entity_index} is never visible in the long span")
    f = int(pool[rng.integers(0, len(pool))])
    e = script.entities[entity_index]
    r1, c1, r2, c2 = box_to_cells(box_at_frame(e, f, script.f_long), script.h, script.w)
    return frames[f, r1:r2, c1:c2].copy(), fallback


def caption_ids(script: SceneScript, order: list[int], prompt_len: int) -> np.ndarray:
    """Template caption over the given entity order, padded to prompt_len."""
    if not order:
        words = ["an", "empty", "scene"]
    else:
        words = []
        for pos, i in enumerate(order):
            if pos:
                words.append("and")
            e = script.entities[i].spec
            words += ["a", color_name(e.color), e.shape.value]
        words.append("moving")
    ids = [vocab.word_id(w) for w in words]
    if len(ids) > prompt_len:
        raise ValidationError(f"caption needs {len(ids)} tokens, prompt length is {prompt_len}")
    return np.array(ids + [vocab.PAD] * (prompt_len - len(ids)), dtype=np.int64)
