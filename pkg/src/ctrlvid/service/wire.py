"""JSON wire schema shared by the HTTP API and the CLI.

Requests arrive as plain dicts; every check raises a validation error
whose ``field`` names the offending path ("entities[0].first_box"), and
the HTTP layer forwards that path verbatim in 400 bodies.  Appearance
references are either a swatch id from the published catalog or an
inline 2-d crop of palette indices.
"""

from __future__ import annotations

import numpy as np

from ..conditioning import dequantize_box, extract_appearance_feature
from ..errors import ValidationError
from ..inference import DecodeConfig, EntityControl, GenerationRequest
from ..model import TransformerConfig
from ..synthworld.palette import NAMED_COLORS, PALETTE_RGB
from ..synthworld.shapes import Shape, shape_mask
from ..synthworld.vocab import PAD, WORDS, all_descriptions, word_id

SWATCH_CELLS = 4  # canonical reference crops are 4x4


def tokenize_prompt(text, prompt_len: int) -> np.ndarray:
    """Whitespace-split caption -> padded id row; unknown words are rejected."""
    if not isinstance(text, str) or not text.strip():
        raise ValidationError("prompt must be a non-empty string", field="prompt")
    ids = []
    for word in text.split():
        try:
            ids.append(word_id(word))
        except KeyError:
            raise ValidationError(f"unknown prompt word {word!r}", field="prompt") from None
    if len(ids) > prompt_len:
        raise ValidationError(
            f"prompt has {len(ids)} words, limit is {prompt_len}", field="prompt"
        )
    return np.array(ids + [PAD] * (prompt_len - len(ids)), dtype=np.int64)


def prompt_text(prompt_ids) -> str:
    return " ".join(WORDS[int(i)] for i in prompt_ids if int(i) != PAD)


def _parse_box(value, field: str) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError("box must be [x1, y1, x2, y2]", field=field)
    try:
        x1, y1, x2, y2 = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ValidationError("box coordinates must be numbers", field=field) from None
    if not all(0.0 <= v <= 1.0 for v in (x1, y1, x2, y2)):
        raise ValidationError("box coordinates must lie in [0, 1]", field=field)
    if x1 >= x2 or y1 >= y2:
        raise ValidationError("box must have positive area (x1 < x2, y1 < y2)", field=field)
    return x1, y1, x2, y2


def swatch_catalog() -> list[dict]:
    """Canonical appearance references: one crop per (color, shape)."""
    out = []
    for desc in all_descriptions():
        color, shape = desc["color"], desc["shape"]
        index = NAMED_COLORS[color]
        cells = shape_mask(Shape(shape), SWATCH_CELLS, SWATCH_CELLS).astype(np.uint8) * index
        out.append(
            {
                "id": f"{color}-{shape}",
                "color": color,
                "shape": shape,
                "description_id": desc["id"],
                "rgb": [int(v) for v in PALETTE_RGB[index]],
                "cells": cells.tolist(),
            }
        )
    return out


_SWATCH_CROPS: dict[str, np.ndarray] | None = None


def swatch_crop(swatch_id: str) -> np.ndarray | None:
    global _SWATCH_CROPS
    if _SWATCH_CROPS is None:
        _SWATCH_CROPS = {s["id"]: np.array(s["cells"], dtype=np.uint8) for s in swatch_catalog()}
    return _SWATCH_CROPS.get(swatch_id)


def _parse_reference(value, field: str, k_pal: int) -> np.ndarray:
    """Swatch id or inline crop -> palette crop array."""
    if isinstance(value, str):
        crop = swatch_crop(value)
        if crop is None:
            raise ValidationError(f"unknown swatch id {value!r}", field=field)
        return crop
    if isinstance(value, list):
        try:
            crop = np.array(value, dtype=np.int64)
        except ValueError:
            raise ValidationError("inline crop must be a rectangular grid", field=field) from None
        if crop.ndim != 2 or crop.size == 0:
            raise ValidationError("inline crop must be a non-empty 2d grid", field=field)
        if crop.min() < 0 or crop.max() >= k_pal:
            raise ValidationError(
                f"inline crop values must be palette indices in [0, {k_pal})", field=field
            )
        return crop.astype(np.uint8)
    raise ValidationError("reference must be a swatch id or inline crop", field=field)


_DESCRIPTION_IDS = {d["text"]: d["id"] for d in all_descriptions()}
_DESCRIPTION_IDS.update({f"{d['color']}-{d['shape']}": d["id"] for d in all_descriptions()})


def _parse_entity(item, i: int, config: TransformerConfig) -> EntityControl:
    path = f"entities[{i}]"
    if not isinstance(item, dict):
        raise ValidationError("entity must be an object", field=path)
    unknown = set(item) - {"description", "first_box", "last_box", "reference"}
    if unknown:
        raise ValidationError(f"unknown entity key {sorted(unknown)[0]!r}", field=path)
    desc = item.get("description")
    if not isinstance(desc, str) or desc not in _DESCRIPTION_IDS:
        raise ValidationError(
            f"description must name a known color-shape pair, got {desc!r}",
            field=f"{path}.description",
        )
    first = _parse_box(item.get("first_box"), f"{path}.first_box")
    last = _parse_box(item.get("last_box"), f"{path}.last_box")
    if "reference" in item and item["reference"] is not None:
        crop = _parse_reference(item["reference"], f"{path}.reference", config.k_vocab)
        appearance = extract_appearance_feature(crop, config.k_vocab)
    else:
        appearance = np.zeros(config.appearance_dim)
    return EntityControl(_DESCRIPTION_IDS[desc], first, last, appearance)


def _parse_decode(body, field: str = "decode") -> DecodeConfig:
    if body is None:
        return DecodeConfig()
    if not isinstance(body, dict):
        raise ValidationError("decode must be an object", field=field)
    unknown = set(body) - {"steps", "guidance_scale", "temperature", "seed"}
    if unknown:
        raise ValidationError(f"unknown decode key {sorted(unknown)[0]!r}", field=field)
    defaults = DecodeConfig()
    steps = body.get("steps", defaults.steps)
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise ValidationError("steps must be a positive integer", field=f"{field}.steps")
    seed = body.get("seed", defaults.seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("seed must be an integer", field=f"{field}.seed")
    try:
        guidance = float(body.get("guidance_scale", defaults.guidance_scale))
        temperature = float(body.get("temperature", defaults.temperature))
    except (TypeError, ValueError):
        raise ValidationError("decode settings must be numbers", field=field) from None
    if guidance < 0.0:
        raise ValidationError("guidance_scale must be >= 0", field=f"{field}.guidance_scale")
    if temperature < 0.0:
        raise ValidationError("temperature must be >= 0", field=f"{field}.temperature")
    return DecodeConfig(steps=steps, guidance_scale=guidance, temperature=temperature, seed=seed)


def parse_request(body, config: TransformerConfig) -> GenerationRequest:
    """Validated wire request -> decodable request; raises with field paths."""
    if not isinstance(body, dict):
        raise ValidationError("request body must be a JSON object")
    unknown = set(body) - {"prompt", "entities", "decode"}
    if unknown:
        raise ValidationError(f"unknown request key {sorted(unknown)[0]!r}")
    prompt_ids = tokenize_prompt(body.get("prompt"), config.prompt_len)
    items = body.get("entities", [])
    if not isinstance(items, list):
        raise ValidationError("entities must be a list", field="entities")
    if len(items) > config.n_slots:
        raise ValidationError(
            f"request has {len(items)} entities, limit is {config.n_slots}", field="entities"
        )
    entities = tuple(_parse_entity(item, i, config) for i, item in enumerate(items))
    decode = _parse_decode(body.get("decode"))
    return GenerationRequest(prompt_ids=prompt_ids, entities=entities, decode=decode)


def request_from_record(record, config: TransformerConfig, decode: DecodeConfig) -> GenerationRequest:
    """Rebuild the generation request a dataset record encodes, for evaluation."""
    entities = []
    for j in np.flatnonzero(record.presence.any(axis=0)):
        crop = record.crops[j]
        if crop is None or np.asarray(crop).size == 0:
            appearance = np.zeros(config.appearance_dim)
        else:
            appearance = extract_appearance_feature(np.asarray(crop), config.k_vocab)
        entities.append(
            EntityControl(
                description_id=int(record.description_ids[j]),
                first_box=dequantize_box(record.boxes_q[0, j], config.box_bins),
                last_box=dequantize_box(record.boxes_q[-1, j], config.box_bins),
                appearance=appearance,
            )
        )
    return GenerationRequest(
        prompt_ids=np.asarray(record.prompt_ids, dtype=np.int64),
        entities=tuple(entities),
        decode=decode,
    )
