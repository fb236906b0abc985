"""Dataset records: (prompt, control grid, clip) triplets plus the FREC
container format.

Each record is fully determined by (seed, index, config): the scene comes
from a derived seed, and the documented random draws — slot shuffling and
reference-crop frame choice — consume a record-local stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..conditioning import quantize_box
from ..errors import FormatError
from ..tokenizer import VideoClip, timesteps_for_frames
from . import vocab
from .palette import color_name
from .scene import (
    SceneScript,
    WorldConfig,
    caption_ids,
    extract_annotations,
    generate_scene,
    render_with_owner,
    sample_reference_crop,
    train_slice,
)

_REC_MAGIC = b"FREC"
_REC_VERSION = 1


@dataclass
class DatasetRecord:
    prompt_ids: np.ndarray          # [L_p] int64
    presence: np.ndarray            # [T, N] bool
    boxes_q: np.ndarray             # [T, N, 4] int64, zero where absent
    description_ids: np.ndarray     # [N] int64, zero where absent
    crops: list                     # N entries: [h, w] uint8 array or None
    clip: VideoClip
    is_image: bool = False
    crop_fallback: bool = False

    @property
    def n_present(self) -> int:
        return int(self.presence.any(axis=0).sum())


def build_record(seed: int, index: int, config: WorldConfig) -> DatasetRecord:
    """Record `index` of the dataset rooted at `seed`."""
    rng = np.random.default_rng([seed, index])
    is_image = bool(rng.random() < config.image_fraction)
    script = generate_scene_for_record(seed, index, config, is_image)
    frames, owner = render_with_owner(script)

    anns = extract_annotations(script, owner, config.overlap_drop_iou, config.n_max)
    prompt = caption_ids(script, [a.entity_index for a in anns], config.prompt_len)

    t_steps = timesteps_for_frames(config.f_train)
    n = config.n_max
    presence = np.zeros((t_steps, n), dtype=bool)
    boxes_q = np.zeros((t_steps, n, 4), dtype=np.int64)
    description_ids = np.zeros(n, dtype=np.int64)
    crops: list = [None] * n

    order = rng.permutation(len(anns))  # training-time slot shuffle
    fallback = False
    for slot, k in enumerate(order):
        ann = anns[k]
        spec = script.entities[ann.entity_index].spec
        presence[:, slot] = True
        ann_boxes = ann.boxes if ann.boxes.shape[0] == t_steps else np.repeat(ann.boxes, t_steps, axis=0)
        for t in range(t_steps):
            boxes_q[t, slot] = quantize_box(ann_boxes[t], config.box_bins)
        description_ids[slot] = vocab.description_id(color_name(spec.color), spec.shape.value)
        crop, fb = sample_reference_crop(script, frames, owner, ann.entity_index, rng)
        crops[slot] = crop
        fallback = fallback or fb

    window = frames[train_slice(script)]
    if is_image:
        window = np.repeat(window, config.f_train, axis=0)
    clip = VideoClip(window.copy(), k_pal=config.k_pal)

    return DatasetRecord(prompt, presence, boxes_q, description_ids, crops, clip,
                         is_image=is_image, crop_fallback=fallback)


def generate_scene_for_record(seed: int, index: int, config: WorldConfig, is_image: bool) -> SceneScript:
    return generate_scene((seed, index, 1), config, static=is_image)


def build_records(seed: int, count: int, config: WorldConfig) -> list[DatasetRecord]:
    return [build_record(seed, i, config) for i in range(count)]


def save_records(path, records: list[DatasetRecord], config: WorldConfig) -> None:
    t_steps = timesteps_for_frames(config.f_train)
    head = struct.pack(
        "<4sHIHHHHHHHH",
        _REC_MAGIC, _REC_VERSION, len(records),
        config.prompt_len, t_steps, config.n_max,
        config.f_train, config.h, config.w, config.k_pal, config.box_bins,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for r in records:
            flags = (1 if r.is_image else 0) | (2 if r.crop_fallback else 0)
            fh.write(struct.pack("<B", flags))
            fh.write(r.prompt_ids.astype("<u2").tobytes())
            fh.write(r.presence.astype(np.uint8).tobytes())
            fh.write(r.boxes_q.astype("<u2").tobytes())
            fh.write(r.description_ids.astype("<u2").tobytes())
            for crop in r.crops:
                if crop is None:
                    fh.write(struct.pack("<BB", 0, 0))
                else:
                    fh.write(struct.pack("<BB", crop.shape[0], crop.shape[1]))
                    fh.write(crop.astype(np.uint8).tobytes())
            fh.write(r.clip.frames.tobytes())


def load_records(path) -> tuple[list[DatasetRecord], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    fmt = "<4sHIHHHHHHHH"
    head = struct.calcsize(fmt)
    if len(blob) < head:
        raise FormatError("record file truncated before header")
    magic, version, count, l_p, t_steps, n_max, f, h, w, k_pal, bins = struct.unpack_from(fmt, blob)
    if magic != _REC_MAGIC:
        raise FormatError(f"bad record magic {magic!r}")
    if version != _REC_VERSION:
        raise FormatError(f"unsupported record version {version}")
    meta = dict(count=count, prompt_len=l_p, t_steps=t_steps, n_max=n_max,
                f=f, h=h, w=w, k_pal=k_pal, box_bins=bins)

    off = head
    records = []
    try:
        for _ in range(count):
            flags = blob[off]; off += 1
            prompt = np.frombuffer(blob, "<u2", l_p, off).astype(np.int64); off += 2 * l_p
            presence = np.frombuffer(blob, np.uint8, t_steps * n_max, off).reshape(t_steps, n_max).astype(bool)
            off += t_steps * n_max
            boxes = np.frombuffer(blob, "<u2", t_steps * n_max * 4, off).reshape(t_steps, n_max, 4).astype(np.int64)
            off += 2 * t_steps * n_max * 4
            desc = np.frombuffer(blob, "<u2", n_max, off).astype(np.int64); off += 2 * n_max
            crops = []
            for _ in range(n_max):
                ch, cw = blob[off], blob[off + 1]; off += 2
                if ch == 0 or cw == 0:
                    crops.append(None)
                else:
                    crops.append(np.frombuffer(blob, np.uint8, ch * cw, off).reshape(ch, cw).copy())
                    off += ch * cw
            frames = np.frombuffer(blob, np.uint8, f * h * w, off).reshape(f, h, w).copy()
            off += f * h * w
            records.append(DatasetRecord(
                prompt, presence, boxes, desc, crops, VideoClip(frames, k_pal=k_pal),
                is_image=bool(flags & 1), crop_fallback=bool(flags & 2),
            ))
    except (IndexError, ValueError) as exc:
        raise FormatError(f"record file truncated mid-record: {exc}") from exc
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after last record")
    return records, meta
