"""Synthetic moving-shapes world: scenes, rendering, annotations, records."""

from .palette import COLOR_NAMES, K_PAL, NAMED_COLORS, PALETTE_RGB, color_index, color_name
from .records import DatasetRecord, build_record, build_records, load_records, save_records
from .scene import (
    EntitySpec,
    PlacedEntity,
    SceneScript,
    TrajectoryAnnotation,
    WorldConfig,
    box_at_frame,
    caption_ids,
    extract_annotations,
    generate_scene,
    render_frames,
    render_with_owner,
    sample_reference_crop,
    train_slice,
)
from .shapes import Shape, box_iou, box_to_cells, cells_to_box, shape_mask
from . import vocab

__all__ = [
    "COLOR_NAMES", "K_PAL", "NAMED_COLORS", "PALETTE_RGB", "color_index", "color_name",
    "DatasetRecord", "build_record", "build_records", "load_records", "save_records",
    "EntitySpec", "PlacedEntity", "SceneScript", "TrajectoryAnnotation", "WorldConfig",
    "box_at_frame", "caption_ids", "extract_annotations", "generate_scene",
    "render_frames", "render_with_owner", "sample_reference_crop", "train_slice",
    "Shape", "box_iou", "box_to_cells", "cells_to_box", "shape_mask", "vocab",
]
