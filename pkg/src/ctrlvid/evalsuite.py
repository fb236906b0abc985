"""Metrics for generated clips, grounded in an exact oracle detector.

The synthetic world makes a real detector unnecessary: every entity is a
solid one-color shape, so connected components of equal color plus
template matching recover boxes and classes exactly on clean renders.
On top of the detector sit three metrics:

- ``trajectory_ap``: did the requested entities show up where asked?
- ``appearance_similarity``: do generated crops look like the reference?
- ``frechet_feature_distance``: distribution-level quality of a clip set.

All three are deterministic functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .conditioning import dequantize_box, extract_appearance_feature
from .errors import UndefinedMetricError, ValidationError
from .synthworld import (
    Shape,
    box_iou,
    box_to_cells,
    cells_to_box,
    shape_mask,
)
from .synthworld.vocab import WORDS, SHAPE_NAMES
from .synthworld.palette import NAMED_COLORS
from .tokenizer import VideoClip

SHAPE_UNKNOWN = "unknown"
IOU_MATCH = 0.5
# Mid and last frame of the 11-frame window.  Decoded clips repeat each
# timestep's frame, so these land on timesteps 3 and 5.
DESK_SCORED_FRAMES = (5, 10)

# 4-connectivity: diagonal contact does not merge components.
_CONN4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Detection:
    """One visible blob: normalized box, palette color, template class."""

    box: tuple[float, float, float, float]
    color: int
    shape: str


@dataclass(frozen=True)
class DetectionResult:
    entities: tuple[Detection, ...]

    def __iter__(self):
        return iter(self.entities)

    def __len__(self) -> int:
        return len(self.entities)


@dataclass(frozen=True)
class RequestedEntity:
    """What a request asked for: class plus box per control timestep."""

    color: int
    shape: str
    boxes: np.ndarray  # [T, 4] normalized (x1, y1, x2, y2)


@dataclass(frozen=True)
class SimilarityResult:
    mean: float
    scored: int
    skipped: int


def _classify_component(mask: np.ndarray) -> tuple[str, tuple[int, int, int, int]]:
    """Template class and cell bbox (r1, c1, r2, c2) of a boolean blob."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r1, r2 = int(rows[0]), int(rows[-1]) + 1
    c1, c2 = int(cols[0]), int(cols[-1]) + 1
    local = mask[r1:r2, c1:c2]
    for shape in Shape:
        if np.array_equal(local, shape_mask(shape, c2 - c1, r2 - r1)):
            return shape.value, (r1, c1, r2, c2)
    return SHAPE_UNKNOWN, (r1, c1, r2, c2)


def oracle_detect(frame: np.ndarray) -> DetectionResult:
    """Detect every visible entity in one palette frame.

    Connected components (4-connectivity) of identical non-background
    color; each component's cell pattern is compared against the shape
    templates at its bounding-box size, and blobs matching none (merged
    or clipped entities, noise) come back as ``unknown``.  Matching is
    exact at the observed size, so a solid rectangular fragment of an
    occluded entity reads as a small square.  Boxes are exact for clean
    renders.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValidationError(f"frame must be a 2d palette grid, got shape {frame.shape}")
    h, w = frame.shape
    found: list[Detection] = []
    for color in np.unique(frame):
        if color == 0:
            continue
        labels, count = ndimage.label(frame == color, structure=_CONN4)
        for k in range(1, count + 1):
            shape, (r1, c1, r2, c2) = _classify_component(labels == k)
            box = cells_to_box(r1, c1, r2, c2, h, w)
            found.append(Detection(box, int(color), shape))
    return DetectionResult(tuple(found))


def timestep_for_frame(frame_index: int, t_steps: int) -> int:
    """Control timestep that owns a frame: 0 holds frame 0, step i holds 2i−1 and 2i."""
    return min((frame_index + 1) // 2, t_steps - 1)


def _requested_box(entity: RequestedEntity, frame_index: int) -> tuple[float, ...]:
    t = timestep_for_frame(frame_index, entity.boxes.shape[0])
    return tuple(float(v) for v in entity.boxes[t])


def trajectory_ap(
    generated: VideoClip,
    requested: list[RequestedEntity],
    frames_to_score: tuple[int, ...] = DESK_SCORED_FRAMES,
) -> float:
    """Fraction of requested entities found where asked, averaged over frames.

    Class-aware at a fixed threshold: a requested entity is matched in a
    scored frame when some detection of the same color and shape overlaps
    its requested box with IoU >= 0.5.  Each detection can satisfy only
    one requested entity per frame.
    """
    if not requested:
        raise UndefinedMetricError("trajectory_ap needs at least one requested entity")
    per_frame = []
    for f in frames_to_score:
        detections = list(oracle_detect(generated.frames[f]))
        used = [False] * len(detections)
        matched = 0
        for entity in requested:
            want = _requested_box(entity, f)
            for i, det in enumerate(detections):
                if used[i] or det.color != entity.color or det.shape != entity.shape:
                    continue
                if box_iou(det.box, want) >= IOU_MATCH:
                    used[i] = True
                    matched += 1
                    break
        per_frame.append(matched / len(requested))
    return float(np.mean(per_frame))


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    # Rounding can push identical vectors an ulp past 1; keep the contract.
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def appearance_similarity(
    generated: VideoClip,
    reference_crops: list[np.ndarray | None],
    trajectories: list[RequestedEntity],
    frames_to_score: tuple[int, ...] = DESK_SCORED_FRAMES,
) -> SimilarityResult:
    """Mean cosine between generated-crop features and reference features.

    Scores every (entity, scored frame) pair: the generated frame is
    cropped at the entity's requested box and compared against its
    reference crop in appearance-feature space.  Pairs with a missing
    reference, an empty crop, or no foreground on either side are
    skipped and counted rather than scored.
    """
    if len(reference_crops) != len(trajectories):
        raise ValidationError(
            f"got {len(reference_crops)} reference crops for {len(trajectories)} trajectories"
        )
    _, h, w = generated.frames.shape
    ref_features: list[np.ndarray | None] = []
    for crop in reference_crops:
        if crop is None or np.asarray(crop).size == 0 or not (np.asarray(crop) != 0).any():
            ref_features.append(None)
        else:
            ref_features.append(extract_appearance_feature(np.asarray(crop), generated.k_pal))

    scores: list[float] = []
    skipped = 0
    for f in frames_to_score:
        frame = generated.frames[f]
        for entity, ref in zip(trajectories, ref_features):
            r1, c1, r2, c2 = box_to_cells(_requested_box(entity, f), h, w)
            crop = frame[r1:r2, c1:c2]
            if ref is None or crop.size == 0 or not (crop != 0).any():
                skipped += 1
                continue
            cos = _cosine(extract_appearance_feature(crop, generated.k_pal), ref)
            if cos is None:
                skipped += 1
                continue
            scores.append(cos)
    if not scores:
        raise UndefinedMetricError(f"no crop pairs could be scored ({skipped} skipped)")
    return SimilarityResult(float(np.mean(scores)), len(scores), skipped)


def _frame_summary(frame: np.ndarray, k_pal: int) -> np.ndarray:
    """Per-frame feature: entity count, mean detected box area, color histogram."""
    detections = oracle_detect(frame)
    count = float(len(detections))
    areas = [(d.box[2] - d.box[0]) * (d.box[3] - d.box[1]) for d in detections]
    mean_area = float(np.mean(areas)) if areas else 0.0
    # Full-resolution histogram (unlike appearance crops' pooled one) so any
    # two distinct colors are separated at the distribution level.
    hist = np.zeros(k_pal)
    fg = frame[frame != 0]
    if fg.size:
        hist = np.bincount(fg.astype(np.int64), minlength=k_pal)[:k_pal] / fg.size
    return np.concatenate([[count, mean_area], hist])


def clip_feature(clip: VideoClip) -> np.ndarray:
    """Concatenated per-frame summaries; fixed length for a fixed frame count."""
    return np.concatenate([_frame_summary(f, clip.k_pal) for f in clip.frames])


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues from rounding clamp to 0."""
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    root = np.sqrt(np.maximum(vals, 0.0))
    return (vecs * root) @ vecs.T


def frechet_feature_distance(set_a: list[VideoClip], set_b: list[VideoClip]) -> float:
    """Fréchet distance between Gaussian fits of two clip sets' features.

    ||mu_a − mu_b||^2 + Tr(Sigma_a + Sigma_b − 2·(Sigma_a·Sigma_b)^1/2),
    with the matrix square root taken through eigendecompositions of
    symmetric products so the result stays real.  The cross term averages
    both product orders, which makes the distance exactly symmetric in
    its arguments; identical sets score 0 up to rounding.
    """
    if len(set_a) < 2 or len(set_b) < 2:
        raise ValidationError(
            f"each clip set needs >= 2 clips, got {len(set_a)} and {len(set_b)}"
        )
    feats_a = np.stack([clip_feature(c) for c in set_a])
    feats_b = np.stack([clip_feature(c) for c in set_b])
    if feats_a.shape[1] != feats_b.shape[1]:
        raise ValidationError(
            f"feature lengths differ ({feats_a.shape[1]} vs {feats_b.shape[1]}); "
            "clip sets must share a frame count"
        )
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    sig_a = np.cov(feats_a, rowvar=False)
    sig_b = np.cov(feats_b, rowvar=False)

    # Tr((Sa·Sb)^1/2) == Tr((Sa^1/2·Sb·Sa^1/2)^1/2), and the inner matrix
    # is symmetric PSD, so eigh applies.
    def trace_cross(s1, s2):
        root = _psd_sqrt(s1)
        return float(np.trace(_psd_sqrt(root @ s2 @ root)))

    cross = 0.5 * (trace_cross(sig_a, sig_b) + trace_cross(sig_b, sig_a))
    d = float(np.sum((mu_a - mu_b) ** 2) + np.trace(sig_a) + np.trace(sig_b) - 2.0 * cross)
    return max(d, 0.0)


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level metric summary; renders as an aligned text block."""

    ap_at_iou50: float
    appearance_similarity: float
    frechet_feature_distance: float
    clip_count: int
    crops_skipped: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ap_at_iou50 <= 1.0:
            raise ValidationError(f"ap_at_iou50 out of [0, 1]: {self.ap_at_iou50}")
        if not -1.0 <= self.appearance_similarity <= 1.0:
            raise ValidationError(
                f"appearance_similarity out of [-1, 1]: {self.appearance_similarity}"
            )
        if self.frechet_feature_distance < 0.0:
            raise ValidationError(
                f"frechet_feature_distance negative: {self.frechet_feature_distance}"
            )

    def render(self) -> str:
        rows = [
            ("clips", str(self.clip_count)),
            ("ap_at_iou50", f"{self.ap_at_iou50:.4f}"),
            ("appearance_similarity", f"{self.appearance_similarity:.4f}"),
            ("frechet_feature_distance", f"{self.frechet_feature_distance:.4f}"),
            ("crops_skipped", str(self.crops_skipped)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render() + "\n")


def _split_description(did: int) -> tuple[int, str]:
    """Description token id -> (palette color index, shape name)."""
    word = WORDS[did]
    color_name, _, shape_name = word.partition("-")
    if color_name not in NAMED_COLORS or shape_name not in SHAPE_NAMES:
        raise ValidationError(f"token {did} ({word!r}) does not describe an entity")
    return NAMED_COLORS[color_name], shape_name


def requested_from_record(record, box_bins: int = 100) -> list[RequestedEntity]:
    """The per-slot class and trajectory a dataset record asks for."""
    out = []
    present = record.presence.any(axis=0)
    for j in np.flatnonzero(present):
        color, shape = _split_description(int(record.description_ids[j]))
        boxes = np.array([dequantize_box(q, box_bins) for q in record.boxes_q[:, j]])
        out.append(RequestedEntity(color, shape, boxes))
    return out


def evaluate_records(
    generated: list[VideoClip],
    records: list,
    frames_to_score: tuple[int, ...] = DESK_SCORED_FRAMES,
    box_bins: int = 100,
) -> EvalReport:
    """Score generated clips against the records their requests came from.

    AP averages over clips whose record asked for at least one entity;
    appearance pools all scoreable (entity, frame) pairs across the
    corpus; the Fréchet distance compares the full generated set against
    the records' ground-truth clips.
    """
    if len(generated) != len(records):
        raise ValidationError(f"got {len(generated)} clips for {len(records)} records")
    ap_values: list[float] = []
    cos_scores: list[float] = []
    skipped = 0
    for clip, record in zip(generated, records):
        requested = requested_from_record(record, box_bins)
        if not requested:
            continue
        ap_values.append(trajectory_ap(clip, requested, frames_to_score))
        crops = [record.crops[j] for j in np.flatnonzero(record.presence.any(axis=0))]
        try:
            sim = appearance_similarity(clip, crops, requested, frames_to_score)
        except UndefinedMetricError:
            skipped += len(requested) * len(frames_to_score)
            continue
        cos_scores.extend([sim.mean] * sim.scored)
        skipped += sim.skipped
    if not ap_values:
        raise UndefinedMetricError("no record requested any entity")
    if not cos_scores:
        raise UndefinedMetricError("no crop pairs could be scored")
    return EvalReport(
        ap_at_iou50=float(np.mean(ap_values)),
        appearance_similarity=float(np.mean(cos_scores)),
        frechet_feature_distance=frechet_feature_distance(
            generated, [r.clip for r in records]
        ),
        clip_count=len(generated),
        crops_skipped=skipped,
    )
